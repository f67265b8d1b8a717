//! Train/test experiments: stratified cross-validation on the training split,
//! a final fit on the whole training split and evaluation on the test split.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sicerp_core::kernel::{BlockCache, KernelBlocks};
use sicerp_core::representation::SiceHierarchy;
use sicerp_core::spd::KernelConfig;
use sicerp_core::svm::multiclass::{fit_on_blocks, predict_on_blocks};
use sicerp_core::svm::{predict, IntegratorKind, TrainConfig, TrainedClassifier};

use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::formats::{ModelFile, WeightsRecord};
use crate::represent::{represent, RepresentationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum IntegratorChoice {
    #[serde(rename = "single")]
    #[value(name = "single")]
    Single,
    #[serde(rename = "beta")]
    #[value(name = "beta")]
    Beta,
    #[serde(rename = "M")]
    #[value(name = "M", alias = "m")]
    Matrix,
    #[serde(rename = "mkl")]
    #[value(name = "mkl")]
    Mkl,
    #[serde(rename = "emk")]
    #[value(name = "emk")]
    Emk,
}

impl IntegratorChoice {
    fn kind(self, level: usize) -> IntegratorKind {
        match self {
            IntegratorChoice::Single => IntegratorKind::Single { level },
            IntegratorChoice::Beta => IntegratorKind::Beta,
            IntegratorChoice::Matrix => IntegratorKind::Matrix,
            IntegratorChoice::Mkl => IntegratorKind::Mkl,
            IntegratorChoice::Emk => IntegratorKind::Emk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Explicit sample ids.
    Explicit { train: Vec<String>, test: Vec<String> },
    /// Odd subjects train, even subjects test.
    OddEvenSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub representation: RepresentationConfig,
    pub integrator: IntegratorChoice,
    /// Level used by `single`; cross-validated when absent.
    pub level: Option<usize>,
    /// Kernel bandwidth; the median heuristic on the training split when
    /// absent.
    pub gamma: Option<f64>,
    /// Factors applied to the bandwidth during cross-validation.
    pub gamma_multipliers: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub split: SplitSpec,
    pub max_iter: usize,
    pub tau: f64,
}

impl ExperimentConfig {
    pub fn new(representation: RepresentationConfig, integrator: IntegratorChoice, seed: u64) -> Self {
        Self {
            representation,
            integrator,
            level: None,
            gamma: None,
            gamma_multipliers: vec![0.5, 1.0, 2.0],
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            folds: 5,
            seed,
            split: SplitSpec::OddEvenSubject,
            max_iter: 100,
            tau: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.representation.validate()?;
        let bad = |m: String| Err(CliError::Config(m));
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad("C grid must be nonempty and positive".into());
        }
        if self.gamma_multipliers.is_empty() || self.gamma_multipliers.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("gamma multipliers must be nonempty and positive".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if let Some(l) = self.level {
            if l >= self.representation.depth() {
                return bad(format!("level {l} out of range for {} levels", self.representation.depth()));
            }
        }
        if !(self.tau > 0.0) || self.max_iter == 0 {
            return bad("optimizer iterations and tau must be positive".into());
        }
        Ok(())
    }
}

/// Resolves the split to dataset indices.
pub fn split_indices(dataset: &Dataset, split: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train, test) = match split {
        SplitSpec::OddEvenSubject => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, s) in dataset.samples.iter().enumerate() {
                match s.subject {
                    Some(subj) if subj % 2 == 1 => train.push(i),
                    Some(_) => test.push(i),
                    None => {
                        return Err(CliError::Config(format!(
                            "sample {} has no subject for an odd/even split",
                            s.id
                        )))
                    }
                }
            }
            (train, test)
        }
        SplitSpec::Explicit { train, test } => {
            let a: BTreeSet<&String> = train.iter().collect();
            if let Some(id) = test.iter().find(|id| a.contains(id)) {
                return Err(CliError::Config(format!("sample {id} is in both splits")));
            }
            let find = |id: &String| {
                dataset
                    .samples
                    .binary_search_by(|s| s.id.as_str().cmp(id))
                    .map_err(|_| CliError::NotFound(format!("sample {id}")))
            };
            let mut tr = train.iter().map(find).collect::<Result<Vec<_>>>()?;
            let mut te = test.iter().map(find).collect::<Result<Vec<_>>>()?;
            tr.sort_unstable();
            tr.dedup();
            te.sort_unstable();
            te.dedup();
            (tr, te)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Config("train and test splits must both be nonempty".into()));
    }
    Ok((train, test))
}

/// Fold of every sample; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let mut next = 0;
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % folds;
            next += 1;
        }
    }
    fold
}

/// One point of the cross-validation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub level: Option<usize>,
    pub gamma_multiplier: f64,
    pub gamma: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub candidate: Candidate,
    pub accuracy: f64,
}

fn train_config(cfg: &ExperimentConfig, cand: &Candidate) -> Result<TrainConfig> {
    let mut tc = TrainConfig::new(
        cfg.integrator.kind(cand.level.unwrap_or(0)),
        KernelConfig::new(cand.gamma)?,
        cand.c,
    );
    tc.optimize.max_iter = cfg.max_iter;
    tc.optimize.tau = cfg.tau;
    Ok(tc)
}

fn base_gamma(cfg: &ExperimentConfig, cache: &BlockCache, level: Option<usize>) -> f64 {
    cfg.gamma
        .unwrap_or_else(|| KernelConfig::median_heuristic(&cache.same_level_squared_distances(level)).gamma())
}

/// Scores every candidate by stratified k-fold accuracy on the training
/// samples only. Ties keep the earliest candidate in grid order.
pub fn cross_validate(cfg: &ExperimentConfig, cache: &BlockCache, labels: &[usize]) -> Result<Vec<CvResult>> {
    let levels: Vec<Option<usize>> = match (cfg.integrator, cfg.level) {
        (IntegratorChoice::Single, None) => (0..cache.depth()).map(Some).collect(),
        (IntegratorChoice::Single, Some(l)) => vec![Some(l)],
        _ => vec![None],
    };
    let fold = stratified_folds(labels, cfg.folds, cfg.seed);
    let mut grids: Vec<(Option<usize>, f64, f64)> = Vec::new();
    for &level in &levels {
        let g0 = base_gamma(cfg, cache, level);
        for &mult in &cfg.gamma_multipliers {
            grids.push((level, mult, g0 * mult));
        }
    }
    let results = grids
        .par_iter()
        .map(|&(level, mult, gamma)| -> Result<Vec<CvResult>> {
            let blocks = cache.kernel_blocks(KernelConfig::new(gamma)?);
            cfg.c_grid
                .iter()
                .map(|&c| {
                    let candidate = Candidate {
                        level,
                        gamma_multiplier: mult,
                        gamma,
                        c,
                    };
                    let tc = train_config(cfg, &candidate)?;
                    let mut correct = 0usize;
                    for f in 0..cfg.folds {
                        let (train, held): (Vec<usize>, Vec<usize>) =
                            (0..labels.len()).partition(|i| fold[*i] != f);
                        if held.is_empty() {
                            continue;
                        }
                        let y: Vec<usize> = train.iter().map(|i| labels[*i]).collect();
                        let fit = fit_on_blocks(&blocks, &train, &y, &tc)?;
                        correct += held
                            .iter()
                            .filter(|i| predict_on_blocks(&fit, &blocks, **i).class == labels[**i])
                            .count();
                    }
                    Ok(CvResult {
                        candidate,
                        accuracy: correct as f64 / labels.len() as f64,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

pub fn select(results: &[CvResult]) -> &CvResult {
    let mut best = &results[0];
    for r in &results[1..] {
        if r.accuracy > best.accuracy {
            best = r;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: Candidate,
    pub cv_accuracy: f64,
    pub cv: Vec<CvResult>,
    pub accuracy: f64,
    /// Row and column order of the confusion matrix.
    pub labels: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Per-label recall; `null` for labels absent from the test split.
    pub recall: Vec<Option<f64>>,
    pub weights: WeightsRecord,
    pub j_trace: Vec<f64>,
    pub predictions: Vec<PredictionRecord>,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub represent: f64,
    pub cache: f64,
    pub cross_validation: f64,
    pub train: f64,
    pub test: f64,
    pub total: f64,
}

pub struct Outcome {
    pub report: Report,
    pub timing: Timing,
    pub model: ModelFile,
}

/// Trains on the training split of `dataset` and evaluates on its test split.
/// Test labels are read only after the final model is fixed.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timing = Timing::default();
    let (train_idx, test_idx) = split_indices(dataset, &cfg.split)?;
    let train_set = Dataset {
        samples: train_idx.iter().map(|i| dataset.samples[*i].clone()).collect(),
    };
    let (model, class_labels, report_base) = fit_training_split(cfg, &train_set, &mut timing)?;

    let t = Instant::now();
    let test_set = Dataset {
        samples: test_idx.iter().map(|i| dataset.samples[*i].clone()).collect(),
    };
    let test_reps = represent(&test_set, &cfg.representation)?;
    let predicted = predict_all(&model, &test_reps)?;
    timing.test = t.elapsed().as_secs_f64();

    let mut labels: BTreeSet<String> = class_labels.iter().cloned().collect();
    labels.extend(test_set.samples.iter().map(|s| s.label.clone()));
    let labels: Vec<String> = labels.into_iter().collect();
    let pos = |l: &str| labels.iter().position(|x| x == l).expect("label listed");
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    let mut predictions = Vec::new();
    for (s, p) in test_set.samples.iter().zip(&predicted) {
        let name = &class_labels[*p];
        confusion[pos(&s.label)][pos(name)] += 1;
        predictions.push(PredictionRecord {
            id: s.id.clone(),
            label: s.label.clone(),
            predicted: name.clone(),
        });
    }
    let correct: usize = (0..labels.len()).map(|k| confusion[k][k]).sum();
    let recall = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[k] as f64 / total as f64)
        })
        .collect();
    let model_file = ModelFile::from_classifier(&model, cfg.representation, class_labels);
    timing.total = start.elapsed().as_secs_f64();
    let report = Report {
        n_test: test_set.len(),
        accuracy: correct as f64 / test_set.len() as f64,
        labels,
        confusion,
        recall,
        weights: model_file.weights.clone(),
        j_trace: model.j_trace.clone(),
        predictions,
        ..report_base
    };
    Ok(Outcome {
        report,
        timing,
        model: model_file,
    })
}

/// Cross-validates and fits the final model; only training samples are seen.
fn fit_training_split(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    timing: &mut Timing,
) -> Result<(TrainedClassifier, Vec<String>, Report)> {
    let t = Instant::now();
    let reps = represent(train_set, &cfg.representation)?;
    timing.represent = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let cache = BlockCache::build(&reps)?;
    timing.cache = t.elapsed().as_secs_f64();

    let class_labels = train_set.labels();
    let labels: Vec<usize> = train_set
        .samples
        .iter()
        .map(|s| class_labels.binary_search(&s.label).expect("label listed"))
        .collect();

    let t = Instant::now();
    let cv = cross_validate(cfg, &cache, &labels)?;
    let best = select(&cv).clone();
    timing.cross_validation = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let tc = train_config(cfg, &best.candidate)?;
    let blocks: KernelBlocks = cache.kernel_blocks(tc.kernel);
    let all: Vec<usize> = (0..reps.len()).collect();
    let fit = fit_on_blocks(&blocks, &all, &labels, &tc)?;
    let model = TrainedClassifier::from_block_fit(fit, &reps, tc.kernel, tc.c)?;
    timing.train = t.elapsed().as_secs_f64();

    let report = Report {
        format_version: crate::formats::FORMAT_VERSION,
        config: cfg.clone(),
        n_train: train_set.len(),
        n_test: 0,
        selected: best.candidate,
        cv_accuracy: best.accuracy,
        cv,
        accuracy: 0.0,
        labels: Vec::new(),
        confusion: Vec::new(),
        recall: Vec::new(),
        weights: WeightsRecord::None,
        j_trace: Vec::new(),
        predictions: Vec::new(),
    };
    Ok((model, class_labels, report))
}

/// Cross-validates on all of `train_set` and returns the fitted model file
/// with the cross-validation results.
pub fn train_model(cfg: &ExperimentConfig, train_set: &Dataset) -> Result<(ModelFile, Vec<CvResult>, Candidate)> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let (model, class_labels, report) = fit_training_split(cfg, train_set, &mut timing)?;
    Ok((
        ModelFile::from_classifier(&model, cfg.representation, class_labels),
        report.cv,
        report.selected,
    ))
}

/// Class id predicted for every representation.
pub fn predict_all(model: &TrainedClassifier, reps: &[SiceHierarchy]) -> Result<Vec<usize>> {
    reps.par_iter()
        .map(|h| Ok(predict(model, h)?.class))
        .collect()
}
