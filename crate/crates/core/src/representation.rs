//! Frame features and SPD representations of a sequence.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glasso::{glasso_path, GlassoOptions, SampleCovariance};
use crate::spd::{SpdMatrix, SymMatrix};

/// Regularizer added to the sample covariance for Cov-RP.
pub const DEFAULT_COV_EPS: f64 = 1e-7;

/// Skeleton joint trajectories: `m` frames of `J` joints in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    joints: usize,
    frames: Vec<Vec<[f64; 3]>>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<[f64; 3]>>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::TooShort {
                frames: frames.len(),
                required: 2,
            });
        }
        let joints = frames[0].len();
        if joints == 0 {
            return Err(Error::FormatError("frame 0 has no joints".into()));
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != joints {
                return Err(Error::FormatError(format!(
                    "frame {t} has {} joints, expected {joints}",
                    frame.len()
                )));
            }
            if frame.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::FormatError(format!("frame {t} has a non-finite coordinate")));
            }
        }
        Ok(Self { joints, frames })
    }

    /// Parses flat rows of `3J` values laid out joint-major, axis-minor.
    pub fn from_flat_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut frames = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            if row.is_empty() || row.len() % 3 != 0 {
                return Err(Error::FormatError(format!(
                    "frame {t} has {} values, expected a nonzero multiple of 3",
                    row.len()
                )));
            }
            frames.push(row.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
        }
        Self::new(frames)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// `m` feature vectors of common dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureSequence {
    dim: usize,
    frames: Vec<Vec<f64>>,
    pub label: Option<String>,
}

impl FrameFeatureSequence {
    pub fn new(frames: Vec<Vec<f64>>, label: Option<String>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::TooShort {
                frames: frames.len(),
                required: 2,
            });
        }
        let dim = frames[0].len();
        if dim == 0 {
            return Err(Error::FormatError("frame 0 is empty".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::FormatError(format!(
                    "frame {t} has {} values, expected {dim}",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::FormatError(format!("frame {t} has a non-finite value")));
            }
        }
        Ok(Self { dim, frames, label })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }
}

/// Joint coordinates flattened as `(j0x, j0y, j0z, j1x, …)`; `d = 3J`.
pub fn coordinate_features(seq: &SkeletonSequence) -> FrameFeatureSequence {
    let frames = seq
        .frames
        .iter()
        .map(|f| f.iter().flat_map(|p| p.iter().copied()).collect())
        .collect();
    FrameFeatureSequence {
        dim: 3 * seq.joints,
        frames,
        label: None,
    }
}

/// Backward and forward joint displacements for every interior frame;
/// `d = 6J`, `m − 2` output frames.
pub fn velocity_features(seq: &SkeletonSequence) -> Result<FrameFeatureSequence> {
    let m = seq.frames.len();
    if m < 3 {
        return Err(Error::TooShort {
            frames: m,
            required: 3,
        });
    }
    let j = seq.joints;
    let mut frames = Vec::with_capacity(m - 2);
    for t in 1..m - 1 {
        let (prev, cur, next) = (&seq.frames[t - 1], &seq.frames[t], &seq.frames[t + 1]);
        let mut v = Vec::with_capacity(6 * j);
        for k in 0..j {
            for a in 0..3 {
                v.push(cur[k][a] - prev[k][a]);
            }
        }
        for k in 0..j {
            for a in 0..3 {
                v.push(next[k][a] - cur[k][a]);
            }
        }
        frames.push(v);
    }
    // m - 2 may be 1; the covariance of a single frame is still defined
    Ok(FrameFeatureSequence {
        dim: 6 * j,
        frames,
        label: None,
    })
}

/// `Σ̂ = (1/m) Σ_t (x_t − μ)(x_t − μ)ᵀ`.
pub fn sample_covariance(f: &FrameFeatureSequence) -> Result<SampleCovariance> {
    let d = f.dim;
    let m = f.frames.len() as f64;
    let mut mean = vec![0.0; d];
    for frame in &f.frames {
        for (acc, v) in mean.iter_mut().zip(frame) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for frame in &f.frames {
        for ((c, v), mu) in centered.iter_mut().zip(frame).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for k in i..d {
                cov[(i, k)] += ci * centered[k];
            }
        }
    }
    for i in 0..d {
        for k in i..d {
            let v = cov[(i, k)] / m;
            cov[(i, k)] = v;
            cov[(k, i)] = v;
        }
    }
    SampleCovariance::new(SymMatrix::new(cov)?)
}

fn regularized(sigma: &SampleCovariance, eps: f64) -> Result<SpdMatrix> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "regularizer must be positive, got {eps}"
        )));
    }
    let n = sigma.dim();
    let m = sigma.matrix().matrix() + DMatrix::identity(n, n) * eps;
    SpdMatrix::from_matrix(m)
}

/// Cov-RP: `Σ̂ + εI`.
pub fn cov_rp(f: &FrameFeatureSequence, eps: f64) -> Result<SpdMatrix> {
    regularized(&sample_covariance(f)?, eps)
}

/// InverseCov-RP: `(Σ̂ + εI)⁻¹`.
pub fn inverse_cov_rp(f: &FrameFeatureSequence, eps: f64) -> Result<SpdMatrix> {
    Ok(cov_rp(f, eps)?.inverse())
}

/// Number of levels and the ratio between the smallest and largest penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub levels: usize,
    pub ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            levels: 10,
            ratio: 0.01,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("grid needs at least one level".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// `levels` log-spaced penalties from `ratio·λ_max` to `λ_max`, where
/// `λ_max` is the largest absolute off-diagonal covariance (or the largest
/// diagonal entry when the covariance is diagonal).
pub fn default_lambda_grid(sigma: &SampleCovariance, spec: GridSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut lambda_max = sigma.max_abs_off_diagonal();
    if lambda_max == 0.0 {
        lambda_max = (0..sigma.dim()).map(|i| sigma.get(i, i)).fold(0.0, f64::max);
    }
    if lambda_max == 0.0 {
        return Err(Error::DegenerateInput("covariance is identically zero".into()));
    }
    let t = spec.levels;
    if t == 1 {
        return Ok(vec![lambda_max]);
    }
    let log_ratio = spec.ratio.ln();
    Ok((0..t)
        .map(|k| {
            let frac = (t - 1 - k) as f64 / (t - 1) as f64;
            lambda_max * (log_ratio * frac).exp()
        })
        .collect())
}

/// SPD matrices of one sample at increasing penalty levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SiceHierarchy {
    pub sample_id: String,
    lambdas: Vec<f64>,
    levels: Vec<SpdMatrix>,
}

impl SiceHierarchy {
    pub fn new(sample_id: impl Into<String>, lambdas: Vec<f64>, levels: Vec<SpdMatrix>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("hierarchy needs at least one level".into()));
        }
        if lambdas.len() != levels.len() {
            return Err(Error::DimensionError(format!(
                "{} penalties for {} levels",
                lambdas.len(),
                levels.len()
            )));
        }
        if lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("penalties must be strictly increasing".into()));
        }
        let d = levels[0].dim();
        if levels.iter().any(|l| l.dim() != d) {
            return Err(Error::DimensionError("levels differ in dimension".into()));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            lambdas,
            levels,
        })
    }

    /// One-level hierarchy, e.g. a Cov-RP matrix tagged with its regularizer.
    pub fn single(sample_id: impl Into<String>, lambda: f64, level: SpdMatrix) -> Self {
        Self {
            sample_id: sample_id.into(),
            lambdas: vec![lambda],
            levels: vec![level],
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn levels(&self) -> &[SpdMatrix] {
        &self.levels
    }

    /// Keeps only the given level.
    pub fn select_level(&self, level: usize) -> Option<SiceHierarchy> {
        let m = self.levels.get(level)?.clone();
        Some(Self::single(self.sample_id.clone(), self.lambdas[level], m))
    }
}

/// Solves the penalty path of `f` over an explicit grid.
pub fn sice_hierarchy(
    sample_id: &str,
    f: &FrameFeatureSequence,
    grid: &[f64],
    opts: &GlassoOptions,
) -> Result<SiceHierarchy> {
    let build = || -> Result<SiceHierarchy> {
        let sigma = sample_covariance(f)?;
        let path = glasso_path(&sigma, grid, opts)?;
        let levels = path.solutions.into_iter().map(|s| s.estimate).collect();
        SiceHierarchy::new(sample_id, path.lambdas, levels)
    };
    build().map_err(|e| e.for_sample(sample_id))
}

/// Same as [`sice_hierarchy`] with the grid anchored at this sample's own
/// `λ_max`.
pub fn sice_hierarchy_auto(
    sample_id: &str,
    f: &FrameFeatureSequence,
    spec: GridSpec,
    opts: &GlassoOptions,
) -> Result<SiceHierarchy> {
    let sigma = sample_covariance(f).map_err(|e| e.for_sample(sample_id))?;
    let grid = default_lambda_grid(&sigma, spec).map_err(|e| e.for_sample(sample_id))?;
    sice_hierarchy(sample_id, f, &grid, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skeleton(joints: usize, frames: usize) -> SkeletonSequence {
        let frames = (0..frames)
            .map(|t| {
                (0..joints)
                    .map(|j| [t as f64, j as f64, (t * j) as f64 * 0.5])
                    .collect()
            })
            .collect();
        SkeletonSequence::new(frames).unwrap()
    }

    #[test]
    fn coordinate_dimensions() {
        assert_eq!(coordinate_features(&skeleton(31, 4)).dim(), 93);
        assert_eq!(coordinate_features(&skeleton(20, 4)).dim(), 60);
        let s = SkeletonSequence::new(vec![vec![[1.0, 2.0, 3.0]]; 3]).unwrap();
        let f = coordinate_features(&s);
        assert!(f.frames().iter().all(|v| v == &vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn coordinate_layout_is_joint_major() {
        let s = SkeletonSequence::new(vec![vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]; 2]).unwrap();
        assert_eq!(coordinate_features(&s).frames()[0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn ragged_skeleton_is_rejected() {
        let r = SkeletonSequence::new(vec![vec![[0.0; 3]; 2], vec![[0.0; 3]; 3]]);
        assert!(matches!(r, Err(Error::FormatError(_))));
        assert!(matches!(
            SkeletonSequence::from_flat_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]),
            Err(Error::FormatError(_))
        ));
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(velocity_features(&skeleton(20, 5)).unwrap().dim(), 120);

        // one joint moving along x only: 0, 1, 3
        let s = SkeletonSequence::new(vec![
            vec![[0.0, 0.0, 0.0]],
            vec![[1.0, 0.0, 0.0]],
            vec![[3.0, 0.0, 0.0]],
        ])
        .unwrap();
        let v = velocity_features(&s).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.frames()[0], vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);

        let still = SkeletonSequence::new(vec![vec![[1.0, 2.0, 3.0]; 2]; 6]).unwrap();
        let v = velocity_features(&still).unwrap();
        assert!(v.frames().iter().flatten().all(|x| *x == 0.0));

        let short = SkeletonSequence::new(vec![vec![[0.0; 3]]; 2]).unwrap();
        assert!(matches!(velocity_features(&short), Err(Error::TooShort { .. })));
    }

    #[test]
    fn covariance_examples() {
        let f = FrameFeatureSequence::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]], None).unwrap();
        let s = sample_covariance(&f).unwrap();
        assert_eq!(s.matrix().to_row_major(), vec![1.0, 0.0, 0.0, 0.0]);

        let f = FrameFeatureSequence::new(vec![vec![3.0, -1.0, 2.0]; 5], None).unwrap();
        let s = sample_covariance(&f).unwrap();
        assert!(s.matrix().to_row_major().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cov_and_inverse_cov_examples() {
        let f = FrameFeatureSequence::new(vec![vec![3.0, -1.0]; 4], None).unwrap();
        let c = cov_rp(&f, DEFAULT_COV_EPS).unwrap();
        assert_eq!(c.as_sym().to_row_major(), vec![1e-7, 0.0, 0.0, 1e-7]);
        assert_eq!(DEFAULT_COV_EPS, 1e-7);

        // frames (±1, ±√3) give Σ̂ = diag(1, 3)
        let r3 = 3f64.sqrt();
        let f = FrameFeatureSequence::new(
            vec![vec![1.0, r3], vec![-1.0, -r3], vec![1.0, -r3], vec![-1.0, r3]],
            None,
        )
        .unwrap();
        let inv = inverse_cov_rp(&f, 1e-300).unwrap();
        assert!((inv.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((inv.get(1, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!(inv.get(0, 1).abs() < 1e-12);

        let eps = 0.25;
        let f = FrameFeatureSequence::new(
            vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]],
            None,
        )
        .unwrap();
        let inv = inverse_cov_rp(&f, eps).unwrap();
        assert!((inv.get(0, 0) - 1.0 / (1.0 + eps)).abs() < 1e-15);
        assert!(cov_rp(&f, 0.0).is_err());
    }

    #[test]
    fn grid_examples() {
        let sigma = SampleCovariance::new(
            SymMatrix::from_row_slice(2, &[1.0, 0.8, 0.8, 1.0]).unwrap(),
        )
        .unwrap();
        let g = default_lambda_grid(&sigma, GridSpec { levels: 3, ratio: 0.01 }).unwrap();
        let want = [0.008, 0.08, 0.8];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        let g = default_lambda_grid(&sigma, GridSpec { levels: 1, ratio: 0.01 }).unwrap();
        assert_eq!(g, vec![0.8]);
        assert_eq!(GridSpec::default().levels, 10);

        let diag = SampleCovariance::new(SymMatrix::from_diagonal(&[0.5, 2.0]).unwrap()).unwrap();
        assert_eq!(
            default_lambda_grid(&diag, GridSpec { levels: 1, ratio: 0.5 }).unwrap(),
            vec![2.0]
        );

        let zero = SampleCovariance::new(SymMatrix::zeros(2)).unwrap();
        assert!(matches!(
            default_lambda_grid(&zero, GridSpec::default()),
            Err(Error::DegenerateInput(_))
        ));
        assert!(GridSpec { levels: 3, ratio: 1.0 }.validate().is_err());
    }

    #[test]
    fn hierarchy_validation() {
        let id = SpdMatrix::identity(2);
        assert!(SiceHierarchy::new("a", vec![], vec![]).is_err());
        assert!(SiceHierarchy::new("a", vec![0.2, 0.1], vec![id.clone(), id.clone()]).is_err());
        assert!(SiceHierarchy::new("a", vec![0.1], vec![id.clone(), id.clone()]).is_err());
        assert!(
            SiceHierarchy::new("a", vec![0.1, 0.2], vec![id.clone(), SpdMatrix::identity(3)]).is_err()
        );
        let h = SiceHierarchy::new("a", vec![0.1, 0.2], vec![id.clone(), id]).unwrap();
        assert_eq!(h.select_level(1).unwrap().depth(), 1);
        assert!(h.select_level(2).is_none());
    }

    #[test]
    fn solver_errors_carry_sample_id() {
        let f = FrameFeatureSequence::new(vec![vec![1.0, 1.0]; 3], None).unwrap();
        let err = sice_hierarchy_auto("s7", &f, GridSpec::default(), &GlassoOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("s7"));
        assert!(matches!(err.root(), Error::DegenerateInput(_)));
    }
}
