//! One-vs-one multiclass training with one weight parameter shared by all
//! class pairs, learned on the sum of the pairwise bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{cross_blocks, BlockCache, Integrator, KernelBlocks, LogHierarchy};
use crate::representation::SiceHierarchy;
use crate::spd::KernelConfig;

use super::bound::{
    optimize_weights, radius_margin_objective, BoundEvaluation, BoundProblem, OptimizeOptions,
    PairProblem, WeightKind,
};
use super::dual::SvmDual;
use super::radius::RadiusOptions;

/// How levels of a hierarchy are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    /// One fixed level, no weight learning.
    Single { level: usize },
    Beta,
    Matrix,
    Mkl,
    /// Uniform average over all level pairs, no weight learning.
    Emk,
}

impl IntegratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            IntegratorKind::Single { .. } => "single",
            IntegratorKind::Beta => "beta",
            IntegratorKind::Matrix => "M",
            IntegratorKind::Mkl => "mkl",
            IntegratorKind::Emk => "emk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: IntegratorKind,
    pub kernel: KernelConfig,
    pub c: f64,
    pub optimize: OptimizeOptions,
    pub radius: RadiusOptions,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
}

impl TrainConfig {
    pub fn new(kind: IntegratorKind, kernel: KernelConfig, c: f64) -> Self {
        Self {
            kind,
            kernel,
            c,
            optimize: OptimizeOptions::default(),
            radius: RadiusOptions::default(),
            svm_tol: 1e-10,
            svm_max_iter: 1_000_000,
        }
    }
}

/// Binary classifier for classes `(positive, negative)`, trained on a
/// subset of the block cache.
#[derive(Debug, Clone)]
pub struct BlockPair {
    pub classes: (usize, usize),
    pub members: Vec<usize>,
    pub labels: Vec<f64>,
    pub dual: SvmDual,
    pub r_squared: f64,
}

/// Model whose training samples are referenced by block-cache index.
#[derive(Debug, Clone)]
pub struct BlockFit {
    pub kind: IntegratorKind,
    pub integrator: Integrator,
    pub classes: Vec<usize>,
    pub pairs: Vec<BlockPair>,
    pub j_trace: Vec<f64>,
}

fn class_list(labels: &[usize]) -> Result<Vec<usize>> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    for &c in &classes {
        let count = labels.iter().filter(|l| **l == c).count();
        if count < 2 {
            return Err(Error::InsufficientClass { class: c, count });
        }
    }
    Ok(classes)
}

/// Trains on the samples `indices` of `blocks`; `labels[k]` is the class of
/// `indices[k]`.
pub fn fit_on_blocks(
    blocks: &KernelBlocks,
    indices: &[usize],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<BlockFit> {
    if indices.len() != labels.len() {
        return Err(Error::DimensionError(format!(
            "{} samples but {} labels",
            indices.len(),
            labels.len()
        )));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", cfg.c)));
    }
    let classes = class_list(labels)?;
    let mut pair_classes = Vec::new();
    let mut pairs = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let mut members = Vec::new();
            let mut y = Vec::new();
            for (&idx, &lab) in indices.iter().zip(labels) {
                if lab == pos || lab == neg {
                    members.push(idx);
                    y.push(if lab == pos { 1.0 } else { -1.0 });
                }
            }
            pair_classes.push((pos, neg));
            pairs.push(PairProblem {
                indices: members,
                labels: y,
            });
        }
    }
    let problem = BoundProblem {
        blocks,
        pairs,
        c: cfg.c,
        radius: cfg.radius,
        svm_tol: cfg.svm_tol,
        svm_max_iter: cfg.svm_max_iter,
    };
    let t = blocks.depth();
    let fixed = |integ: Integrator| -> Result<(Integrator, BoundEvaluation, Vec<f64>)> {
        let eval = radius_margin_objective(&problem, &integ)?;
        let trace = vec![eval.j];
        Ok((integ, eval, trace))
    };
    let (integrator, eval, j_trace) = match cfg.kind {
        IntegratorKind::Single { level } => {
            if level >= t {
                return Err(Error::InvalidArgument(format!(
                    "level {level} out of range for {t} levels"
                )));
            }
            let mut beta = DVector::zeros(t);
            beta[level] = 1.0;
            fixed(Integrator::Beta(beta))?
        }
        IntegratorKind::Emk => fixed(Integrator::Emk)?,
        IntegratorKind::Beta | IntegratorKind::Matrix | IntegratorKind::Mkl => {
            let kind = match cfg.kind {
                IntegratorKind::Beta => WeightKind::Beta,
                IntegratorKind::Matrix => WeightKind::Matrix,
                _ => WeightKind::Mkl,
            };
            let r = optimize_weights(kind, &problem, &cfg.optimize)?;
            (r.integrator, r.evaluation, r.j_trace)
        }
    };
    let pairs = problem
        .pairs
        .into_iter()
        .zip(eval.pairs)
        .zip(pair_classes)
        .map(|((p, e), classes)| BlockPair {
            classes,
            members: p.indices,
            labels: p.labels,
            dual: e.dual,
            r_squared: e.radius.r_squared,
        })
        .collect();
    Ok(BlockFit {
        kind: cfg.kind,
        integrator,
        classes,
        pairs,
        j_trace,
    })
}

/// Vote outcome for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// `(class, votes)` in class order.
    pub votes: Vec<(usize, usize)>,
    /// Decision value of every pair classifier; positive favors the first
    /// class of the pair.
    pub decision_values: Vec<((usize, usize), f64)>,
}

fn vote(classes: &[usize], decisions: Vec<((usize, usize), f64)>) -> Prediction {
    let mut votes = vec![0usize; classes.len()];
    let mut strength = vec![0.0f64; classes.len()];
    let slot = |c: usize| classes.binary_search(&c).expect("known class");
    for &((pos, neg), v) in &decisions {
        let winner = if v > 0.0 { pos } else { neg };
        let k = slot(winner);
        votes[k] += 1;
        strength[k] += v.abs();
    }
    let mut best = 0;
    for k in 1..classes.len() {
        let better = votes[k] > votes[best]
            || (votes[k] == votes[best] && strength[k] > strength[best]);
        if better {
            best = k;
        }
    }
    Prediction {
        class: classes[best],
        votes: classes.iter().copied().zip(votes).collect(),
        decision_values: decisions,
    }
}

/// Predicts sample `index` of the same block cache the fit was trained on.
pub fn predict_on_blocks(fit: &BlockFit, blocks: &KernelBlocks, index: usize) -> Prediction {
    let decisions = fit
        .pairs
        .iter()
        .map(|pair| {
            let mut v = pair.dual.bias;
            for ((&m, &eta), &l) in pair.members.iter().zip(&pair.dual.eta).zip(&pair.labels) {
                if eta == 0.0 {
                    continue;
                }
                let block = blocks.block(m.min(index), m.max(index));
                v += eta * l * fit.integrator.reduce(&block.values);
            }
            (pair.classes, v)
        })
        .collect();
    vote(&fit.classes, decisions)
}

/// Pair classifier referencing rows of [`TrainedClassifier::support`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairClassifier {
    pub classes: (usize, usize),
    /// `(support row, η_i·l_i)` for every sample with `η_i > 0`.
    pub coefficients: Vec<(usize, f64)>,
    pub bias: f64,
    pub r_squared: f64,
    pub w_norm_squared: f64,
}

/// Self-contained model: weights, per-pair duals and the support samples.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub kind: IntegratorKind,
    pub integrator: Integrator,
    pub kernel: KernelConfig,
    pub c: f64,
    pub depth: usize,
    pub dim: usize,
    pub classes: Vec<usize>,
    pub pairs: Vec<PairClassifier>,
    pub support: Vec<SiceHierarchy>,
    pub j_trace: Vec<f64>,
    support_logs: Vec<LogHierarchy>,
}

impl TrainedClassifier {
    /// Reassembles a model from its parts (e.g. after deserialization).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: IntegratorKind,
        integrator: Integrator,
        kernel: KernelConfig,
        c: f64,
        classes: Vec<usize>,
        pairs: Vec<PairClassifier>,
        support: Vec<SiceHierarchy>,
        j_trace: Vec<f64>,
    ) -> Result<Self> {
        let first = support
            .first()
            .ok_or_else(|| Error::InvalidArgument("model has no support samples".into()))?;
        let (depth, dim) = (first.depth(), first.dim());
        if support.iter().any(|s| s.depth() != depth || s.dim() != dim) {
            return Err(Error::DimensionError("support samples differ in shape".into()));
        }
        if let Some(t) = integrator.depth() {
            if t != depth {
                return Err(Error::DimensionError(format!(
                    "weights have {t} levels, support samples have {depth}"
                )));
            }
        }
        for p in &pairs {
            if p.coefficients.iter().any(|(row, _)| *row >= support.len()) {
                return Err(Error::InvalidArgument("support row out of range".into()));
            }
            for c in [p.classes.0, p.classes.1] {
                if classes.binary_search(&c).is_err() {
                    return Err(Error::InvalidArgument(format!("pair refers to unknown class {c}")));
                }
            }
        }
        let support_logs = support
            .iter()
            .map(LogHierarchy::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            integrator,
            kernel,
            c,
            depth,
            dim,
            classes,
            pairs,
            support,
            j_trace,
            support_logs,
        })
    }

    /// Builds a self-contained model from a block fit; `samples[i]` must be
    /// the hierarchy behind block index `i`.
    pub fn from_block_fit(fit: BlockFit, samples: &[SiceHierarchy], kernel: KernelConfig, c: f64) -> Result<Self> {
        let mut used: Vec<usize> = fit
            .pairs
            .iter()
            .flat_map(|p| {
                p.members
                    .iter()
                    .zip(&p.dual.eta)
                    .filter(|(_, e)| **e > 0.0)
                    .map(|(m, _)| *m)
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        let row_of = |m: usize| used.binary_search(&m).expect("support index");
        let pairs = fit
            .pairs
            .iter()
            .map(|p| PairClassifier {
                classes: p.classes,
                coefficients: p
                    .members
                    .iter()
                    .zip(&p.dual.eta)
                    .zip(&p.labels)
                    .filter(|((_, e), _)| **e > 0.0)
                    .map(|((m, e), l)| (row_of(*m), e * l))
                    .collect(),
                bias: p.dual.bias,
                r_squared: p.r_squared,
                w_norm_squared: p.dual.w_norm_squared,
            })
            .collect();
        let support = used.iter().map(|&i| samples[i].clone()).collect();
        Self::from_parts(
            fit.kind,
            fit.integrator,
            kernel,
            c,
            fit.classes,
            pairs,
            support,
            fit.j_trace,
        )
    }
}

/// Trains a one-vs-one model on `dataset` with integer class labels.
pub fn train_multiclass(dataset: &[SiceHierarchy], labels: &[usize], cfg: &TrainConfig) -> Result<TrainedClassifier> {
    if dataset.len() != labels.len() {
        return Err(Error::DimensionError(format!(
            "{} samples but {} labels",
            dataset.len(),
            labels.len()
        )));
    }
    class_list(labels)?;
    let blocks = BlockCache::build(dataset)?.kernel_blocks(cfg.kernel);
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let fit = fit_on_blocks(&blocks, &indices, labels, cfg)?;
    TrainedClassifier::from_block_fit(fit, dataset, cfg.kernel, cfg.c)
}

/// Majority vote over all pair classifiers; ties go to the larger summed
/// absolute decision value, then to the lower class id.
pub fn predict(model: &TrainedClassifier, sample: &SiceHierarchy) -> Result<Prediction> {
    if sample.depth() != model.depth || sample.dim() != model.dim {
        return Err(Error::ModelMismatch(format!(
            "sample {} has {} levels of dimension {}, model expects {} of dimension {}",
            sample.sample_id,
            sample.depth(),
            sample.dim(),
            model.depth,
            model.dim
        )));
    }
    let logs = LogHierarchy::new(sample)?;
    let blocks: Vec<DMatrix<f64>> = cross_blocks(&model.support_logs, &logs, model.kernel)?;
    let values: Vec<f64> = blocks.iter().map(|b| model.integrator.reduce(b)).collect();
    let decisions = model
        .pairs
        .iter()
        .map(|p| {
            let v = p
                .coefficients
                .iter()
                .fold(p.bias, |acc, (row, coef)| acc + coef * values[*row]);
            (p.classes, v)
        })
        .collect();
    Ok(vote(&model.classes, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_tie_breaks() {
        // three classes, each wins once: strength decides
        let p = vote(
            &[0, 1, 2],
            vec![((0, 1), 0.5), ((0, 2), -2.0), ((1, 2), 0.7)],
        );
        assert_eq!(p.votes, vec![(0, 1), (1, 1), (2, 1)]);
        assert_eq!(p.class, 2);

        // exact tie in votes and strength: lowest id
        let p = vote(&[0, 1, 2], vec![((0, 1), 1.0), ((0, 2), -1.0), ((1, 2), 1.0)]);
        assert_eq!(p.class, 0);

        let p = vote(&[3, 7], vec![((3, 7), -0.1)]);
        assert_eq!(p.class, 7);
    }

    #[test]
    fn class_checks() {
        assert!(matches!(class_list(&[1, 1, 1]), Err(Error::DegenerateLabels)));
        assert!(matches!(
            class_list(&[0, 0, 1]),
            Err(Error::InsufficientClass { class: 1, count: 1 })
        ));
        assert_eq!(class_list(&[2, 0, 2, 0]).unwrap(), vec![0, 2]);
    }
}
