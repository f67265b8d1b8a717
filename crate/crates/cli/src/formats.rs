//! File formats: representation and model JSON documents, the SRGB binary
//! block cache and CSV matrix dumps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use sicerp_core::kernel::{Integrator, KernelBlocks};
use sicerp_core::representation::SiceHierarchy;
use sicerp_core::spd::{KernelConfig, SpdMatrix};
use sicerp_core::svm::multiclass::PairClassifier;
use sicerp_core::svm::{IntegratorKind, TrainedClassifier};

use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::represent::RepresentationConfig;

pub const FORMAT_VERSION: u32 = 1;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn square_from(values: &[f64], what: &str) -> Result<DMatrix<f64>> {
    let d = (values.len() as f64).sqrt().round() as usize;
    if d * d != values.len() {
        return Err(CliError::Config(format!("{what}: {} values do not form a square", values.len())));
    }
    Ok(DMatrix::from_row_slice(d, d, values))
}

/// One sample's SPD levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<u32>,
    pub lambdas: Vec<f64>,
    /// Row-major `d×d` matrix per level.
    pub levels: Vec<Vec<f64>>,
}

impl HierarchyRecord {
    pub fn from_hierarchy(h: &SiceHierarchy, label: Option<String>, subject: Option<u32>) -> Self {
        Self {
            id: h.sample_id.clone(),
            label,
            subject,
            lambdas: h.lambdas().to_vec(),
            levels: h.levels().iter().map(|l| row_major(l.matrix())).collect(),
        }
    }

    pub fn to_hierarchy(&self) -> Result<SiceHierarchy> {
        let levels = self
            .levels
            .iter()
            .map(|v| Ok(SpdMatrix::from_matrix(square_from(v, &self.id)?)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(SiceHierarchy::new(self.id.clone(), self.lambdas.clone(), levels)?)
    }

    pub fn level(&self, level: usize) -> Result<DMatrix<f64>> {
        let v = self.levels.get(level).ok_or_else(|| {
            CliError::NotFound(format!("level {level} of sample {} ({} levels)", self.id, self.levels.len()))
        })?;
        square_from(v, &self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationFile {
    pub format_version: u32,
    pub kind: String,
    pub config: RepresentationConfig,
    pub samples: Vec<HierarchyRecord>,
}

impl RepresentationFile {
    pub fn new(config: RepresentationConfig, dataset: &Dataset, reps: &[SiceHierarchy]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: "representation".into(),
            config,
            samples: dataset
                .samples
                .iter()
                .zip(reps)
                .map(|(s, h)| HierarchyRecord::from_hierarchy(h, Some(s.label.clone()), s.subject))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum WeightsRecord {
    None,
    Vector(Vec<f64>),
    /// Row-major `T×T`.
    Matrix(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub classes: [usize; 2],
    /// `(support row, η_i·l_i)`.
    pub coefficients: Vec<(usize, f64)>,
    pub bias: f64,
    pub r_squared: f64,
    pub w_norm_squared: f64,
}

/// Self-contained trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: String,
    pub representation: RepresentationConfig,
    /// `single`, `beta`, `M`, `mkl` or `emk`.
    pub integrator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub weights: WeightsRecord,
    pub gamma: f64,
    pub c: f64,
    /// Class label of every class id.
    pub class_labels: Vec<String>,
    pub pairs: Vec<PairRecord>,
    pub support: Vec<HierarchyRecord>,
    pub j_trace: Vec<f64>,
}

fn kind_from_name(name: &str, level: Option<usize>) -> Result<IntegratorKind> {
    Ok(match (name, level) {
        ("single", Some(level)) => IntegratorKind::Single { level },
        ("beta", _) => IntegratorKind::Beta,
        ("M", _) => IntegratorKind::Matrix,
        ("mkl", _) => IntegratorKind::Mkl,
        ("emk", _) => IntegratorKind::Emk,
        _ => return Err(CliError::Config(format!("unknown integrator {name:?}"))),
    })
}

impl ModelFile {
    pub fn from_classifier(model: &TrainedClassifier, representation: RepresentationConfig, class_labels: Vec<String>) -> Self {
        let weights = match &model.integrator {
            Integrator::Beta(b) | Integrator::Mkl(b) => WeightsRecord::Vector(b.iter().copied().collect()),
            Integrator::Matrix(m) => WeightsRecord::Matrix(row_major(m)),
            Integrator::Emk => WeightsRecord::None,
        };
        let level = match model.kind {
            IntegratorKind::Single { level } => Some(level),
            _ => None,
        };
        Self {
            format_version: FORMAT_VERSION,
            kind: "model".into(),
            representation,
            integrator: model.kind.name().into(),
            level,
            weights,
            gamma: model.kernel.gamma(),
            c: model.c,
            class_labels,
            pairs: model
                .pairs
                .iter()
                .map(|p| PairRecord {
                    classes: [p.classes.0, p.classes.1],
                    coefficients: p.coefficients.clone(),
                    bias: p.bias,
                    r_squared: p.r_squared,
                    w_norm_squared: p.w_norm_squared,
                })
                .collect(),
            support: model
                .support
                .iter()
                .map(|h| HierarchyRecord::from_hierarchy(h, None, None))
                .collect(),
            j_trace: model.j_trace.clone(),
        }
    }

    pub fn to_classifier(&self) -> Result<TrainedClassifier> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let kind = kind_from_name(&self.integrator, self.level)?;
        let integrator = match (kind, &self.weights) {
            (IntegratorKind::Emk, WeightsRecord::None) => Integrator::Emk,
            (IntegratorKind::Mkl, WeightsRecord::Vector(v)) => Integrator::Mkl(DVector::from_vec(v.clone())),
            (IntegratorKind::Single { .. } | IntegratorKind::Beta, WeightsRecord::Vector(v)) => {
                Integrator::Beta(DVector::from_vec(v.clone()))
            }
            (IntegratorKind::Matrix, WeightsRecord::Matrix(v)) => Integrator::Matrix(square_from(v, "weights")?),
            _ => return Err(CliError::Config("weights do not match the integrator".into())),
        };
        let classes: Vec<usize> = (0..self.class_labels.len()).collect();
        let pairs = self
            .pairs
            .iter()
            .map(|p| PairClassifier {
                classes: (p.classes[0], p.classes[1]),
                coefficients: p.coefficients.clone(),
                bias: p.bias,
                r_squared: p.r_squared,
                w_norm_squared: p.w_norm_squared,
            })
            .collect();
        let support = self
            .support
            .iter()
            .map(HierarchyRecord::to_hierarchy)
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainedClassifier::from_parts(
            kind,
            integrator,
            KernelConfig::new(self.gamma)?,
            self.c,
            classes,
            pairs,
            support,
            self.j_trace.clone(),
        )?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path.display(), e.line(), e.to_string()))
}

const SRGB_MAGIC: &[u8; 4] = b"SRGB";
const SRGB_VERSION: u32 = 1;

/// Binary block cache: magic, version, `N`, `T` (u32 LE), then every block
/// `i <= j` in pair order, row-major, as f64 LE.
pub fn encode_srgb(blocks: &KernelBlocks) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * blocks.raw().len());
    out.extend_from_slice(SRGB_MAGIC);
    out.extend_from_slice(&SRGB_VERSION.to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    out.extend_from_slice(&(blocks.depth() as u32).to_le_bytes());
    for v in blocks.raw() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_srgb(bytes: &[u8]) -> std::result::Result<KernelBlocks, String> {
    if bytes.len() < 16 || &bytes[..4] != SRGB_MAGIC {
        return Err("not an SRGB file".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != SRGB_VERSION {
        return Err(format!("unsupported SRGB version {version}"));
    }
    let (n, t) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    let expected = n * (n + 1) / 2 * t * t * 8;
    if body.len() != expected {
        return Err(format!("expected {expected} payload bytes for N={n}, T={t}, found {}", body.len()));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    KernelBlocks::from_raw(n, t, values).map_err(|e| e.to_string())
}

pub fn write_srgb(path: &Path, blocks: &KernelBlocks) -> Result<()> {
    fs::write(path, encode_srgb(blocks)).map_err(|e| CliError::io(path, e))
}

pub fn read_srgb(path: &Path) -> Result<KernelBlocks> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_srgb(&bytes).map_err(|m| CliError::format(path.display(), 1, m))
}

/// `%.17g`-style rendering: 17 significant digits, trailing zeros dropped,
/// positional notation for exponents in `[-5, 17)`.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.16e}", v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if v < 0.0 { "-" } else { "" };
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    };
    if (-5..17).contains(&exp) {
        let body = if exp >= 0 {
            let split = exp as usize + 1;
            format!("{}.{}", &digits[..split], &digits[split..])
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        format!("{sign}{}", trim(body))
    } else {
        let m = trim(format!("{}.{}", &digits[..1], &digits[1..]));
        format!("{sign}{m}e{exp}")
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_g17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| CliError::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = crate::dataset::read_csv_frames(path)?;
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

/// Dumps one level of one sample from a representation or model file.
pub fn dump_level(input: &Path, id: &str, level: usize, out: &Path) -> Result<DMatrix<f64>> {
    let value: serde_json::Value = read_json(input)?;
    let records: Vec<HierarchyRecord> = match value.get("kind").and_then(|k| k.as_str()) {
        Some("representation") => serde_json::from_value::<RepresentationFile>(value)
            .map_err(|e| CliError::format(input.display(), 1, e.to_string()))?
            .samples,
        Some("model") => serde_json::from_value::<ModelFile>(value)
            .map_err(|e| CliError::format(input.display(), 1, e.to_string()))?
            .support,
        _ => return Err(CliError::format(input.display(), 1, "neither a representation nor a model file")),
    };
    let record = records
        .iter()
        .find(|r| r.id == id)
        .ok_or_else(|| CliError::NotFound(format!("sample {id} in {}", input.display())))?;
    let m = record.level(level)?;
    write_matrix_csv(out, &m)?;
    Ok(m)
}
