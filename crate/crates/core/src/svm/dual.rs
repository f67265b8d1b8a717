//! L2-soft-margin SVM dual.
//!
//! Maximizes `Σ η_i − ½ Σ η_i η_j l_i l_j k̃_ij` subject to `Σ η_i l_i = 0`,
//! `η ≥ 0`, with `k̃ = k + I/C`. The slack penalty lives entirely in the
//! ridge, so there is no upper bound on `η` and `‖w‖² = Σ η_i` at the
//! optimum.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::radius::min_eigenvalue;

/// Binary problem: kernel matrix, `±1` labels and the ridge parameter.
#[derive(Debug, Clone)]
pub struct LabeledKernelSet {
    pub gram: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub c: f64,
}

impl LabeledKernelSet {
    pub fn new(gram: DMatrix<f64>, labels: Vec<f64>, c: f64) -> Result<Self> {
        let n = labels.len();
        if gram.nrows() != n || gram.ncols() != n {
            return Err(Error::DimensionError(format!(
                "{}x{} kernel for {n} labels",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        if labels.iter().any(|l| *l != 1.0 && *l != -1.0) {
            return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("kernel has non-finite entries".into()));
        }
        Ok(Self { gram, labels, c })
    }

    fn ridge_kernel(&self, i: usize, j: usize) -> f64 {
        self.gram[(i, j)] + if i == j { 1.0 / self.c } else { 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmDual {
    pub eta: Vec<f64>,
    pub w_norm_squared: f64,
    pub bias: f64,
    /// Dual objective at `eta`.
    pub objective: f64,
}

impl SvmDual {
    /// `|Σ η_i l_i|` plus the magnitude of any negative coefficient.
    pub fn feasibility_residual(&self, labels: &[f64]) -> f64 {
        let balance: f64 = self.eta.iter().zip(labels).map(|(e, l)| e * l).sum();
        let neg = self.eta.iter().fold(0.0f64, |acc, e| acc.max(-e));
        balance.abs() + neg
    }
}

/// SMO-style solver: each step moves along `l_i e_i − l_j e_j` for the
/// maximal violating pair (second-order choice of `j`), which keeps the
/// equality constraint exact.
pub fn solve_svm_l2(set: &LabeledKernelSet, tol: f64, max_iter: usize) -> Result<SvmDual> {
    let n = set.labels.len();
    let y = &set.labels;
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::DegenerateLabels);
    }
    let mut eta = vec![0.0; n];
    // gradient of ½ηᵀQη − Σ η, Q_ij = y_i y_j k̃_ij
    let mut grad = vec![-1.0; n];
    for _ in 0..max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if (y[t] > 0.0 || eta[t] > 0.0) && v > g_max {
                g_max = v;
                i = t;
            }
            if (y[t] < 0.0 || eta[t] > 0.0) && v < g_min {
                g_min = v;
            }
        }
        if g_max - g_min <= tol {
            break;
        }
        let kii = set.ridge_kernel(i, i);
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !(y[t] < 0.0 || eta[t] > 0.0) {
                continue;
            }
            let b = g_max + y[t] * grad[t];
            if b > 0.0 {
                let a = kii + set.ridge_kernel(t, t) - 2.0 * set.ridge_kernel(i, t);
                if a <= 0.0 {
                    return Err(indefinite(set));
                }
                let score = -(b * b) / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        let b = g_max + y[j] * grad[j];
        let a = kii + set.ridge_kernel(j, j) - 2.0 * set.ridge_kernel(i, j);
        let mut step = b / a;
        if y[i] < 0.0 {
            step = step.min(eta[i]);
        }
        if y[j] > 0.0 {
            step = step.min(eta[j]);
        }
        // exact zeros when a coefficient hits its bound
        eta[i] = if y[i] < 0.0 && step == eta[i] { 0.0 } else { eta[i] + y[i] * step };
        eta[j] = if y[j] > 0.0 && step == eta[j] { 0.0 } else { eta[j] - y[j] * step };
        for (t, g) in grad.iter_mut().enumerate() {
            *g += y[t] * step * (set.ridge_kernel(t, i) - set.ridge_kernel(t, j));
        }
    }
    Ok(finish(set, eta))
}

/// Nonpositive curvature along a pair direction: the dual is unbounded.
fn indefinite(set: &LabeledKernelSet) -> Error {
    let ridged = &set.gram + DMatrix::identity(set.gram.nrows(), set.gram.ncols()) / set.c;
    match min_eigenvalue(&ridged) {
        Ok(min_eigenvalue) => Error::IndefiniteKernel { min_eigenvalue },
        Err(e) => e,
    }
}

fn finish(set: &LabeledKernelSet, eta: Vec<f64>) -> SvmDual {
    let n = eta.len();
    let y = &set.labels;
    let mut q_eta = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if eta[j] != 0.0 {
                acc += y[i] * y[j] * set.ridge_kernel(i, j) * eta[j];
            }
        }
        q_eta[i] = acc;
    }
    let sum: f64 = eta.iter().sum();
    let quad: f64 = eta.iter().zip(&q_eta).map(|(e, q)| e * q).sum();
    let objective = sum - 0.5 * quad;
    // for η_i > 0: y_i (Σ_j η_j y_j k̃_ij + b) = 1
    let mut bias_acc = 0.0;
    let mut free = 0;
    for i in 0..n {
        if eta[i] > 0.0 {
            bias_acc += y[i] * (1.0 - q_eta[i]);
            free += 1;
        }
    }
    let bias = if free > 0 { bias_acc / free as f64 } else { 0.0 };
    SvmDual {
        eta,
        w_norm_squared: (2.0 * objective).max(0.0),
        bias,
        objective,
    }
}

/// Largest KKT violation: the gap between the maximal violating pair.
pub fn svm_kkt_violation(set: &LabeledKernelSet, dual: &SvmDual) -> f64 {
    let n = dual.eta.len();
    let y = &set.labels;
    let mut g_max = f64::NEG_INFINITY;
    let mut g_min = f64::INFINITY;
    for t in 0..n {
        let grad: f64 = (0..n)
            .map(|j| y[t] * y[j] * set.ridge_kernel(t, j) * dual.eta[j])
            .sum::<f64>()
            - 1.0;
        let v = -y[t] * grad;
        if y[t] > 0.0 || dual.eta[t] > 0.0 {
            g_max = g_max.max(v);
        }
        if y[t] < 0.0 || dual.eta[t] > 0.0 {
            g_min = g_min.min(v);
        }
    }
    (g_max - g_min).max(0.0)
}
