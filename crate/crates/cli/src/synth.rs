//! Seeded synthetic datasets: each class is a zero-mean Gaussian whose
//! precision matrix has a known sparse structure.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use sicerp_core::representation::FrameFeatureSequence;
use sicerp_core::spd::SpdMatrix;

use crate::dataset::{Dataset, Sample};
use crate::error::{CliError, Result};

/// Off-diagonal support of a class precision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// `i ~ i+1`.
    Chain,
    /// 4-neighbour lattice with `⌈√d⌉` columns, filled row by row.
    Grid,
    /// Every pair independently with probability `density`.
    RandomSparse { density: f64 },
}

impl Structure {
    /// Parses `chain`, `grid` or `random:<density>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Structure::Chain),
            "grid" => Ok(Structure::Grid),
            _ => {
                let density = s
                    .strip_prefix("random:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Spec(format!("unknown structure {s:?}")))?;
                Ok(Structure::RandomSparse { density })
            }
        }
    }

    fn edges(&self, d: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        match self {
            Structure::Chain => (0..d - 1).map(|i| (i, i + 1)).collect(),
            Structure::Grid => {
                let cols = (d as f64).sqrt().ceil() as usize;
                let mut e = Vec::new();
                for i in 0..d {
                    if (i + 1) % cols != 0 && i + 1 < d {
                        e.push((i, i + 1));
                    }
                    if i + cols < d {
                        e.push((i, i + cols));
                    }
                }
                e
            }
            Structure::RandomSparse { density } => {
                let mut e = Vec::new();
                for i in 0..d {
                    for j in i + 1..d {
                        if rng.random::<f64>() < *density {
                            e.push((i, j));
                        }
                    }
                }
                e
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub classes: Vec<Structure>,
    /// Standard deviation of isotropic noise added to every frame.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Three classes (chain, grid, random 10%) in 20 dimensions with 12 to
    /// 18 frames per sample.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            d: 20,
            m_min: 12,
            m_max: 18,
            train_per_class: 30,
            test_per_class: 30,
            classes: vec![
                Structure::Chain,
                Structure::Grid,
                Structure::RandomSparse { density: 0.1 },
            ],
            noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Spec(m.to_owned()));
        if self.d < 2 {
            return bad("d must be at least 2");
        }
        if self.m_min < 2 || self.m_min > self.m_max {
            return bad("frame range must satisfy 2 <= m_min <= m_max");
        }
        if self.classes.is_empty() {
            return bad("at least one class structure is required");
        }
        if self.train_per_class + self.test_per_class == 0 {
            return bad("no samples requested");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a nonnegative number");
        }
        for c in &self.classes {
            if let Structure::RandomSparse { density } = c {
                if !(*density > 0.0 && *density <= 1.0) {
                    return bad("density must lie in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub labels: Vec<String>,
    /// Ground-truth precision per class, in the order of `labels`.
    pub precisions: Vec<DMatrix<f64>>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

const EDGE_MIN: f64 = 0.1;
const EDGE_MAX: f64 = 0.2;
const DIAGONAL_MARGIN: f64 = 0.1;

/// Edge weights of magnitude in `[EDGE_MIN, EDGE_MAX)` with random sign.
/// The diagonal is constant, `DIAGONAL_MARGIN + max_i Σ_j |P_ij|`, so every
/// row is strictly diagonally dominant and all variables share one scale.
fn precision(structure: &Structure, d: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let mut p = DMatrix::zeros(d, d);
    for (i, j) in structure.edges(d, rng) {
        let magnitude = EDGE_MIN + (EDGE_MAX - EDGE_MIN) * rng.random::<f64>();
        let w = if rng.random::<bool>() { magnitude } else { -magnitude };
        p[(i, j)] = w;
        p[(j, i)] = w;
    }
    let widest = (0..d)
        .map(|i| (0..d).filter(|j| *j != i).map(|j| p[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    p.fill_diagonal(DIAGONAL_MARGIN + widest);
    SpdMatrix::from_matrix(p.clone())
        .map_err(|e| CliError::Spec(format!("{structure:?} precision is not SPD: {e}")))?;
    Ok(p)
}

pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let precisions = spec
        .classes
        .iter()
        .map(|s| precision(s, d, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    // x = L⁻ᵀz has covariance (LLᵀ)⁻¹
    let factors: Vec<DMatrix<f64>> = precisions
        .iter()
        .map(|p| {
            let l = p.clone().cholesky().expect("checked SPD").unpack();
            l.transpose()
        })
        .collect();
    let labels: Vec<String> = (0..spec.classes.len()).map(|c| format!("class{c}")).collect();
    let mut samples = Vec::new();
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (split, count) in [("train", spec.train_per_class), ("test", spec.test_per_class)] {
        for k in 0..count {
            for (c, upper) in factors.iter().enumerate() {
                let m = rng.random_range(spec.m_min..=spec.m_max);
                let frames = (0..m)
                    .map(|_| {
                        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let x = upper.solve_upper_triangular(&z).expect("nonsingular factor");
                        x.iter()
                            .map(|v| {
                                if spec.noise > 0.0 {
                                    v + spec.noise * rng.sample::<f64, _>(StandardNormal)
                                } else {
                                    *v
                                }
                            })
                            .collect()
                    })
                    .collect();
                let id = format!("{split}_{k:04}_c{c}");
                // odd subjects train, even subjects test
                let subject = if split == "train" { 2 * (k % 5) as u32 + 1 } else { 2 * (k % 5) as u32 + 2 };
                if split == "train" {
                    train_ids.push(id.clone());
                } else {
                    test_ids.push(id.clone());
                }
                samples.push(Sample {
                    id,
                    label: labels[c].clone(),
                    subject: Some(subject),
                    features: FrameFeatureSequence::new(frames, Some(labels[c].clone()))?,
                });
            }
        }
    }
    train_ids.sort();
    test_ids.sort();
    Ok(SyntheticData {
        dataset: Dataset::new(samples)?,
        labels,
        precisions,
        train_ids,
        test_ids,
    })
}

/// Ground truth as written next to a generated dataset.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub labels: Vec<String>,
    /// Row-major `d×d` precision per class.
    pub precisions: Vec<Vec<f64>>,
}

impl SyntheticData {
    pub fn ground_truth(&self, spec: &SyntheticSpec) -> GroundTruth {
        GroundTruth {
            spec: spec.clone(),
            labels: self.labels.clone(),
            precisions: self
                .precisions
                .iter()
                .map(|p| p.transpose().iter().copied().collect())
                .collect(),
        }
    }
}
