//! Symmetric and SPD matrix primitives plus the log-Euclidean base kernel.
//!
//! Everything that compares two SPD matrices goes through their matrix
//! logarithms: `d(A, B) = ‖log A − log B‖_F` and
//! `κ(A, B) = exp(−γ·d(A, B)²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 0; // unbounded

/// Dense symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from `a`, replacing it with `(a + aᵀ)/2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidMatrix(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let n = a.nrows();
        let mut inner = a;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inner[(i, j)] + inner[(j, i)]);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Ok(Self { inner })
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionError(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }
}

/// Symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    base: SymMatrix,
}

impl SpdMatrix {
    /// Accepts `a` when its smallest eigenvalue is strictly positive.
    pub fn new(a: SymMatrix) -> Result<Self> {
        let (values, _) = sym_eigen(&a)?;
        let min = *values.last().expect("nonempty spectrum");
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Self { base: a })
    }

    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(a)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            base: SymMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.base.get(i, j)
    }

    /// Inverse via the eigendecomposition, so the result is symmetric and SPD.
    pub fn inverse(&self) -> SpdMatrix {
        let (values, vectors) = sym_eigen(&self.base).expect("SPD matrix is finite");
        let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
        Self {
            base: reassemble(&inv, &vectors),
        }
    }

    /// `ln det`, from the eigenvalues.
    pub fn log_det(&self) -> f64 {
        let (values, _) = sym_eigen(&self.base).expect("SPD matrix is finite");
        values.iter().map(|v| v.ln()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (values, _) = sym_eigen(&self.base).expect("SPD matrix is finite");
        *values.last().expect("nonempty spectrum")
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
///
/// Eigenvectors are the columns of the returned matrix. The underlying
/// algorithm is a fixed-order Householder tridiagonalization followed by
/// implicit QR, so identical input bits give identical output bits.
pub fn sym_eigen(a: &SymMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if a.inner.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let eig = SymmetricEigen::try_new(a.inner.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::InvalidMatrix("eigendecomposition failed".into()))?;
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

fn reassemble(values: &[f64], vectors: &DMatrix<f64>) -> SymMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*v);
    }
    let mut out = scaled * vectors.transpose();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymMatrix { inner: out }
}

/// Principal matrix logarithm `V·diag(ln λ)·Vᵀ`.
pub fn matrix_log(a: &SpdMatrix) -> Result<SymMatrix> {
    let (values, vectors) = sym_eigen(&a.base)?;
    let min = *values.last().expect("nonempty spectrum");
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Ok(reassemble(&logs, &vectors))
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn matrix_exp(a: &SymMatrix) -> Result<SpdMatrix> {
    let (values, vectors) = sym_eigen(a)?;
    let exps: Vec<f64> = values.iter().map(|v| v.exp()).collect();
    SpdMatrix::new(reassemble(&exps, &vectors))
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionError(format!(
            "matrices have dimensions {a} and {b}"
        )));
    }
    Ok(())
}

/// `‖log A − log B‖_F`.
pub fn log_euclidean_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let la = matrix_log(a)?;
    let lb = matrix_log(b)?;
    Ok(squared_distance_of_logs(&la, &lb).sqrt())
}

/// Squared Frobenius distance between two log-domain images.
pub fn squared_distance_of_logs(la: &SymMatrix, lb: &SymMatrix) -> f64 {
    la.inner
        .iter()
        .zip(lb.inner.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Bandwidth of the Gaussian log-Euclidean kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    gamma: f64,
}

impl KernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `1 / median` of the given squared distances (zeros ignored).
    ///
    /// Falls back to `gamma = 1` when every distance is zero.
    pub fn median_heuristic(squared_distances: &[f64]) -> Self {
        let mut positive: Vec<f64> = squared_distances
            .iter()
            .copied()
            .filter(|v| *v > 0.0 && v.is_finite())
            .collect();
        if positive.is_empty() {
            return Self { gamma: 1.0 };
        }
        positive.sort_by(f64::total_cmp);
        let n = positive.len();
        let median = if n % 2 == 1 {
            positive[n / 2]
        } else {
            0.5 * (positive[n / 2 - 1] + positive[n / 2])
        };
        Self {
            gamma: 1.0 / median,
        }
    }

    /// Kernel value from a squared log-Euclidean distance.
    #[inline]
    pub fn eval_squared(&self, squared_distance: f64) -> f64 {
        (-self.gamma * squared_distance).exp()
    }
}

/// `exp(−γ‖log A − log B‖²_F)`.
pub fn log_euclidean_kernel(a: &SpdMatrix, b: &SpdMatrix, cfg: KernelConfig) -> Result<f64> {
    let d = log_euclidean_distance(a, b)?;
    Ok(cfg.eval_squared(d * d))
}
