//! Squared radius of the smallest ball enclosing the training images.

use log::info;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::{sym_eigen, SymMatrix};

/// What to do when the kernel matrix has negative eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftPolicy {
    Reject,
    /// Add `max(0, −λ_min) + 1e-10` to the diagonal.
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusOptions {
    /// Largest allowed spread of squared distances to the center among the
    /// support points.
    pub tol: f64,
    pub max_iter: usize,
    pub shift: ShiftPolicy,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
            shift: ShiftPolicy::Shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSolution {
    pub alpha: Vec<f64>,
    pub r_squared: f64,
    /// Diagonal shift applied before solving (0 when the kernel was PSD).
    pub shift: f64,
}

impl RadiusSolution {
    /// `|Σα − 1|` plus the magnitude of any negative coefficient.
    pub fn feasibility_residual(&self) -> f64 {
        let sum: f64 = self.alpha.iter().sum();
        let neg = self.alpha.iter().fold(0.0f64, |acc, a| acc.max(-a));
        (sum - 1.0).abs() + neg
    }
}

/// Tolerance below zero at which a kernel matrix counts as indefinite.
pub(crate) fn indefinite_threshold(gram: &DMatrix<f64>) -> f64 {
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].abs()).fold(1.0, f64::max);
    -1e-8 * scale
}

/// Smallest eigenvalue of a symmetric kernel matrix.
pub(crate) fn min_eigenvalue(gram: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = sym_eigen(&SymMatrix::new(gram.clone())?)?;
    Ok(*values.last().expect("nonempty spectrum"))
}

/// Maximizes `Σα_i k_ii − Σα_iα_j k_ij` over the probability simplex.
///
/// Pairwise coordinate ascent: mass moves from the support point closest to
/// the center to the point farthest from it, with an exact line search.
pub fn solve_radius(gram: &DMatrix<f64>, opts: &RadiusOptions) -> Result<RadiusSolution> {
    let n = gram.nrows();
    if n == 0 || !gram.is_square() {
        return Err(Error::DimensionError("kernel matrix must be square and nonempty".into()));
    }
    let min_eig = min_eigenvalue(gram)?;
    let mut shift = 0.0;
    if min_eig < indefinite_threshold(gram) {
        match opts.shift {
            ShiftPolicy::Reject => {
                return Err(Error::IndefiniteKernel {
                    min_eigenvalue: min_eig,
                })
            }
            ShiftPolicy::Shift => {
                shift = -min_eig + 1e-10;
                info!("radius kernel indefinite (λ_min = {min_eig:e}); shifting diagonal by {shift:e}");
            }
        }
    }
    let k = |i: usize, j: usize| gram[(i, j)] + if i == j { shift } else { 0.0 };

    let mut alpha = vec![1.0 / n as f64; n];
    // f = K α
    let mut f: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k(i, j) * alpha[j]).sum())
        .collect();
    for _ in 0..opts.max_iter {
        // gradient of the objective: g_i = k_ii − 2 f_i
        let mut up = 0;
        let mut g_up = f64::NEG_INFINITY;
        let mut down = usize::MAX;
        let mut g_down = f64::INFINITY;
        for i in 0..n {
            let g = k(i, i) - 2.0 * f[i];
            if g > g_up {
                g_up = g;
                up = i;
            }
            if alpha[i] > 0.0 && g < g_down {
                g_down = g;
                down = i;
            }
        }
        let gap = g_up - g_down;
        if gap <= opts.tol || up == down {
            break;
        }
        let curvature = k(up, up) + k(down, down) - 2.0 * k(up, down);
        let mut t = if curvature > 0.0 {
            gap / (2.0 * curvature)
        } else {
            alpha[down]
        };
        if t >= alpha[down] {
            t = alpha[down];
        }
        alpha[up] += t;
        if t == alpha[down] {
            alpha[down] = 0.0;
        } else {
            alpha[down] -= t;
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += t * (k(i, up) - k(i, down));
        }
    }
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        lin += alpha[i] * k(i, i);
        for j in 0..n {
            quad += alpha[i] * alpha[j] * k(i, j);
        }
    }
    Ok(RadiusSolution {
        alpha,
        r_squared: (lin - quad).max(0.0),
        shift,
    })
}

/// Largest KKT violation of a radius solution: the spread between the
/// farthest point and the nearest support point, in squared distance to
/// the center.
pub fn radius_kkt_violation(gram: &DMatrix<f64>, sol: &RadiusSolution) -> f64 {
    let n = gram.nrows();
    let k = |i: usize, j: usize| gram[(i, j)] + if i == j { sol.shift } else { 0.0 };
    let ka: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k(i, j) * sol.alpha[j]).sum())
        .collect();
    let aka: f64 = (0..n).map(|i| sol.alpha[i] * ka[i]).sum();
    let mut worst = 0.0f64;
    for i in 0..n {
        let dist = k(i, i) - 2.0 * ka[i] + aka;
        let excess = dist - sol.r_squared;
        if sol.alpha[i] > 0.0 {
            worst = worst.max(excess.abs());
        } else {
            worst = worst.max(excess);
        }
    }
    worst
}
