use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("sample covariance is singular; an unpenalized estimate does not exist")]
    SingularityError,

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}){}",
        level.map(|l| format!(" at level {l}")).unwrap_or_default())]
    NotConverged {
        iterations: usize,
        residual: f64,
        level: Option<usize>,
        /// Best iterate reached before giving up, row-major.
        best: Option<Vec<f64>>,
    },

    #[error("malformed input: {0}")]
    FormatError(String),

    #[error("sequence too short: {frames} frames, need at least {required}")]
    TooShort { frames: usize, required: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("kernel matrix is indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteKernel { min_eigenvalue: f64 },

    #[error("labels must contain both classes")]
    DegenerateLabels,

    #[error("dual solution is stale (feasibility residual {0:e})")]
    StaleDuals(f64),

    #[error("class {class} has {count} training samples, need at least 2")]
    InsufficientClass { class: usize, count: usize },

    #[error("sample does not match model: {0}")]
    ModelMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the id of the sample it occurred on.
    pub fn for_sample(self, sample: &str) -> Self {
        Error::Sample {
            sample: sample.to_string(),
            source: Box::new(self),
        }
    }

    /// Strips [`Error::Sample`] and [`Error::AtIteration`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } | Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
