//! Labeled frame sequences and their on-disk forms.
//!
//! Two input layouts are accepted:
//! - JSON Lines, one sample per line:
//!   `{"id": str, "label": str, "subject": int?, "frames": [[f64, ...], ...]}`
//! - a JSON manifest listing samples whose frames are either inline or in a
//!   CSV file (`m` rows of `3J` joint coordinates), resolved relative to the
//!   manifest.
//!
//! Samples are always ordered by id.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sicerp_core::representation::{
    coordinate_features, velocity_features, FrameFeatureSequence, SkeletonSequence,
};

use crate::error::{CliError, Result};

/// How raw frame rows become feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Rows are already feature vectors.
    #[default]
    Raw,
    /// Rows are `3J` joint coordinates, used as is.
    Coordinates,
    /// Rows are `3J` joint coordinates, turned into backward/forward velocities.
    Velocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: String,
    pub subject: Option<u32>,
    pub features: FrameFeatureSequence,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subject: Option<u32>,
    frames: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(default)]
    mode: Option<FeatureMode>,
    samples: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    label: String,
    #[serde(default)]
    subject: Option<u32>,
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    frames: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    /// Sorts by id and checks ids are unique and labels nonempty.
    pub fn new(mut samples: Vec<Sample>) -> Result<Self> {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        for w in samples.windows(2) {
            if w[0].id == w[1].id {
                return Err(CliError::Config(format!("duplicate sample id {}", w[0].id)));
            }
        }
        if let Some(s) = samples.iter().find(|s| s.label.is_empty()) {
            return Err(CliError::Config(format!("sample {} has an empty label", s.id)));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.samples.iter().map(|s| s.label.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Writes the feature vectors as JSON Lines (raw mode on reload).
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.samples {
            let record = Record {
                id: s.id.clone(),
                label: s.label.clone(),
                subject: s.subject,
                frames: s.features.frames().to_vec(),
            };
            let line = serde_json::to_string(&record).expect("records serialize");
            writeln!(out, "{line}").map_err(|e| CliError::io(path, e))?;
        }
        out.flush().map_err(|e| CliError::io(path, e))
    }
}

fn featurize(frames: Vec<Vec<f64>>, label: &str, mode: FeatureMode) -> sicerp_core::Result<FrameFeatureSequence> {
    match mode {
        FeatureMode::Raw => FrameFeatureSequence::new(frames, Some(label.to_owned())),
        FeatureMode::Coordinates | FeatureMode::Velocity => {
            let seq = SkeletonSequence::from_flat_rows(&frames)?;
            let f = if mode == FeatureMode::Coordinates {
                coordinate_features(&seq)
            } else {
                velocity_features(&seq)?
            };
            FrameFeatureSequence::new(f.frames().to_vec(), Some(label.to_owned()))
        }
    }
}

/// Reads a JSON Lines dataset.
pub fn read_jsonl(path: &Path, mode: FeatureMode) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let shown = path.display();
    let mut samples = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(line).map_err(|e| CliError::format(&shown, k + 1, e.to_string()))?;
        let features = featurize(record.frames, &record.label, mode)
            .map_err(|e| CliError::format(&shown, k + 1, e.to_string()))?;
        samples.push(Sample {
            id: record.id,
            label: record.label,
            subject: record.subject,
            features,
        });
    }
    Dataset::new(samples)
}

/// Reads a numeric CSV: one frame per nonempty row, equal arity throughout.
pub fn read_csv_frames(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let shown = path.display();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(CliError::format(&shown, k + 1, format!("non-finite value {cell}"))),
                    Err(_) => Err(CliError::format(&shown, k + 1, format!("not a number: {cell:?}"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::format(
                    &shown,
                    k + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::format(&shown, 1, "no frames"));
    }
    Ok(rows)
}

/// Reads a manifest; `mode` overrides the manifest's own mode.
pub fn read_manifest(path: &Path, mode: Option<FeatureMode>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        CliError::format(path.display(), e.line(), e.to_string())
    })?;
    let mode = mode.or(manifest.mode).unwrap_or_default();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for entry in manifest.samples {
        let (frames, origin) = match (entry.frames, entry.path) {
            (Some(frames), None) => (frames, path.display().to_string()),
            (None, Some(rel)) => {
                let file = base.join(rel);
                if !file.exists() {
                    return Err(CliError::NotFound(format!(
                        "{} (sample {})",
                        file.display(),
                        entry.id
                    )));
                }
                (read_csv_frames(&file)?, file.display().to_string())
            }
            _ => {
                return Err(CliError::Config(format!(
                    "sample {} needs exactly one of \"frames\" or \"path\"",
                    entry.id
                )))
            }
        };
        let features = featurize(frames, &entry.label, mode)
            .map_err(|e| CliError::format(&origin, 1, format!("sample {}: {e}", entry.id)))?;
        samples.push(Sample {
            id: entry.id,
            label: entry.label,
            subject: entry.subject,
            features,
        });
    }
    Dataset::new(samples)
}

/// Dispatches on the extension: `.jsonl` files are sequences, anything else
/// a manifest.
pub fn ingest(path: &Path, mode: Option<FeatureMode>) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        read_jsonl(path, mode.unwrap_or_default())
    } else {
        read_manifest(path, mode)
    }
}
