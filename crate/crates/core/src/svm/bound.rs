//! Radius-margin bound over hierarchy-kernel weights and its minimization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{Integrator, KernelBlocks};

use super::dual::{solve_svm_l2, LabeledKernelSet, SvmDual};
use super::radius::{solve_radius, RadiusOptions, RadiusSolution};

/// Dual solutions older than this feasibility residual are rejected.
const STALE_DUAL_RESIDUAL: f64 = 1e-6;

/// One binary subproblem: sample indices into the block cache and their
/// `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProblem {
    pub indices: Vec<usize>,
    pub labels: Vec<f64>,
}

/// Everything `J` depends on apart from the weights.
#[derive(Debug, Clone)]
pub struct BoundProblem<'a> {
    pub blocks: &'a KernelBlocks,
    pub pairs: Vec<PairProblem>,
    pub c: f64,
    pub radius: RadiusOptions,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
}

impl<'a> BoundProblem<'a> {
    /// Binary problem over `indices` with default solver settings.
    pub fn binary(blocks: &'a KernelBlocks, indices: Vec<usize>, labels: Vec<f64>, c: f64) -> Self {
        Self {
            blocks,
            pairs: vec![PairProblem { indices, labels }],
            c,
            radius: RadiusOptions::default(),
            svm_tol: 1e-10,
            svm_max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub radius: RadiusSolution,
    pub dual: SvmDual,
    pub j: f64,
}

/// `J = Σ_pairs R²‖w‖²` with the duals it was computed from.
#[derive(Debug, Clone)]
pub struct BoundEvaluation {
    pub j: f64,
    pub pairs: Vec<PairEvaluation>,
}

/// Assembles each pair's kernel matrix under `integ`, solves the radius and
/// margin duals and sums `R²‖w‖²` over pairs.
pub fn radius_margin_objective(problem: &BoundProblem<'_>, integ: &Integrator) -> Result<BoundEvaluation> {
    let pairs = problem
        .pairs
        .par_iter()
        .map(|pair| {
            let mut gram = problem.blocks.gram(&pair.indices, integ)?;
            let radius = solve_radius(&gram, &problem.radius)?;
            // the margin QP sees the same shifted kernel as the radius QP
            if radius.shift > 0.0 {
                gram.set_diagonal(&(gram.diagonal().add_scalar(radius.shift)));
            }
            let set = LabeledKernelSet::new(gram, pair.labels.clone(), problem.c)?;
            let dual = solve_svm_l2(&set, problem.svm_tol, problem.svm_max_iter)?;
            let j = radius.r_squared * dual.w_norm_squared;
            Ok(PairEvaluation { radius, dual, j })
        })
        .collect::<Result<Vec<_>>>()?;
    let j = pairs.iter().map(|p| p.j).sum();
    Ok(BoundEvaluation { j, pairs })
}

/// Which weights are being learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Beta,
    Matrix,
    Mkl,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightGradient {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl WeightGradient {
    /// Largest magnitude; NaN if any entry is NaN.
    pub fn max_abs(&self) -> f64 {
        let values = match self {
            WeightGradient::Vector(v) => v.as_slice(),
            WeightGradient::Matrix(m) => m.as_slice(),
        };
        if values.iter().any(|x| x.is_nan()) {
            return f64::NAN;
        }
        values.iter().fold(0.0, |a: f64, x| a.max(x.abs()))
    }
}

/// Gradient of `J` at fixed optimal duals:
/// `∂J = ‖w‖²·∂R² + R²·∂‖w‖²` with
/// `∂R² = Σα_i ∂k_ii − Σα_iα_j ∂k_ij` and `∂‖w‖² = −Σ η_iη_j l_il_j ∂k_ij`.
///
/// For [`Integrator::Matrix`] the result holds the partial derivative for
/// every entry `M_ab` taken independently. A diagonal shift applied by the
/// radius solver is treated as constant.
pub fn gradient_weights(
    problem: &BoundProblem<'_>,
    integ: &Integrator,
    at: &BoundEvaluation,
) -> Result<WeightGradient> {
    if matches!(integ, Integrator::Emk) {
        return Err(Error::InvalidArgument("EMK has no weights to differentiate".into()));
    }
    if at.pairs.len() != problem.pairs.len() {
        return Err(Error::DimensionError("evaluation does not match problem".into()));
    }
    let t = problem.blocks.depth();
    let mut acc = DMatrix::<f64>::zeros(t, t);
    for (pair, eval) in problem.pairs.iter().zip(&at.pairs) {
        let n = pair.indices.len();
        if eval.radius.alpha.len() != n || eval.dual.eta.len() != n {
            return Err(Error::DimensionError("dual length does not match pair".into()));
        }
        let residual = eval
            .radius
            .feasibility_residual()
            .max(eval.dual.feasibility_residual(&pair.labels));
        if residual > STALE_DUAL_RESIDUAL {
            return Err(Error::StaleDuals(residual));
        }
        let alpha = &eval.radius.alpha;
        let eta = &eval.dual.eta;
        let l = &pair.labels;
        let r2 = eval.radius.r_squared;
        let w2 = eval.dual.w_norm_squared;
        for a in 0..n {
            for b in a..n {
                let mut coef = -w2 * alpha[a] * alpha[b] - r2 * eta[a] * eta[b] * l[a] * l[b];
                if a == b {
                    coef += w2 * alpha[a];
                } else {
                    coef *= 2.0;
                }
                if coef == 0.0 {
                    continue;
                }
                let (i, j) = (pair.indices[a], pair.indices[b]);
                let block = problem.blocks.block(i.min(j), i.max(j));
                acc += &block.values * coef;
            }
        }
    }
    Ok(match integ {
        Integrator::Beta(beta) => WeightGradient::Vector((&acc + acc.transpose()) * beta),
        Integrator::Mkl(_) => WeightGradient::Vector(acc.diagonal()),
        Integrator::Matrix(_) => WeightGradient::Matrix(acc),
        Integrator::Emk => unreachable!(),
    })
}

/// Euclidean projection onto `{x : x ≥ 0, Σx = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, x) in u.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Symmetrizes `m`, then projects its entries onto the simplex.
pub fn project_simplex_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let flat: Vec<f64> = sym.iter().copied().collect();
    let projected = project_simplex(&flat);
    let mut out = DMatrix::from_column_slice(m.nrows(), m.ncols(), &projected);
    // exact symmetry
    for i in 0..out.nrows() {
        for j in (i + 1)..out.ncols() {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Outer iterations `I`.
    pub max_iter: usize,
    /// Relative change `τ` in `J` that ends the loop.
    pub tau: f64,
    /// Step halvings tried before giving up on an iteration.
    pub max_halvings: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tau: 1e-5,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub integrator: Integrator,
    /// `J` at the start and after every accepted step.
    pub j_trace: Vec<f64>,
    /// Weights at the start and after every accepted step.
    pub iterates: Vec<Integrator>,
    /// Whether the relative-change rule (or a stalled line search) ended
    /// the loop before `max_iter`.
    pub converged: bool,
    pub evaluation: BoundEvaluation,
}

fn uniform(kind: WeightKind, t: usize) -> Integrator {
    match kind {
        WeightKind::Beta => Integrator::Beta(DVector::from_element(t, 1.0 / t as f64)),
        WeightKind::Mkl => Integrator::Mkl(DVector::from_element(t, 1.0 / t as f64)),
        WeightKind::Matrix => Integrator::Matrix(DMatrix::from_element(t, t, 1.0 / (t * t) as f64)),
    }
}

fn step_from(current: &Integrator, grad: &WeightGradient, step: f64) -> Integrator {
    match (current, grad) {
        (Integrator::Beta(b), WeightGradient::Vector(g)) => {
            let v: Vec<f64> = (b - g * step).iter().copied().collect();
            Integrator::Beta(DVector::from_vec(project_simplex(&v)))
        }
        (Integrator::Mkl(b), WeightGradient::Vector(g)) => {
            let v: Vec<f64> = (b - g * step).iter().copied().collect();
            Integrator::Mkl(DVector::from_vec(project_simplex(&v)))
        }
        (Integrator::Matrix(m), WeightGradient::Matrix(g)) => {
            Integrator::Matrix(project_simplex_matrix(&(m - g * step)))
        }
        _ => unreachable!("gradient shape follows the integrator"),
    }
}

/// Minimizes `J` over the simplex from uniform weights by projected
/// gradient steps with a halving line search; a step is accepted only if it
/// lowers `J`.
pub fn optimize_weights(kind: WeightKind, problem: &BoundProblem<'_>, opts: &OptimizeOptions) -> Result<Optimized> {
    let t = problem.blocks.depth();
    let mut current = uniform(kind, t);
    let mut eval = radius_margin_objective(problem, &current).map_err(|e| at_iteration(e, 0))?;
    let mut j_trace = vec![eval.j];
    let mut iterates = vec![current.clone()];
    if t == 1 {
        return Ok(Optimized {
            integrator: current,
            j_trace,
            iterates,
            converged: true,
            evaluation: eval,
        });
    }
    let mut step: Option<f64> = None;
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let mut grad =
            gradient_weights(problem, &current, &eval).map_err(|e| at_iteration(e, iteration))?;
        if let WeightGradient::Matrix(g) = &mut grad {
            *g = (&*g + g.transpose()) * 0.5;
        }
        let gmax = grad.max_abs();
        if !gmax.is_finite() {
            return Err(at_iteration(Error::InvalidMatrix("non-finite gradient".into()), iteration));
        }
        if gmax == 0.0 {
            converged = true;
            break;
        }
        let mut s = step.unwrap_or(1.0 / gmax);
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = step_from(&current, &grad, s);
            if candidate == current {
                break;
            }
            let e = radius_margin_objective(problem, &candidate)
                .map_err(|e| at_iteration(e, iteration))?;
            if e.j < eval.j {
                accepted = Some((candidate, e));
                break;
            }
            s *= 0.5;
        }
        let Some((candidate, e)) = accepted else {
            converged = true;
            break;
        };
        let previous = eval.j;
        current = candidate;
        eval = e;
        j_trace.push(eval.j);
        iterates.push(current.clone());
        step = Some(2.0 * s);
        if (previous - eval.j).abs() <= opts.tau * previous {
            converged = true;
            break;
        }
    }
    Ok(Optimized {
        integrator: current,
        j_trace,
        iterates,
        converged,
        evaluation: eval,
    })
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    Error::AtIteration {
        iteration,
        source: Box::new(e),
    }
}
