//! Per-sample SPD representations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sicerp_core::glasso::GlassoOptions;
use sicerp_core::representation::{
    cov_rp, inverse_cov_rp, sice_hierarchy_auto, GridSpec, SiceHierarchy, DEFAULT_COV_EPS,
};

use crate::dataset::Dataset;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationKind {
    /// `Σ̂ + εI`, one level.
    Cov,
    /// `(Σ̂ + εI)⁻¹`, one level.
    Invcov,
    /// SICE path; classified at a single level.
    Sice,
    /// SICE path; classified with all levels combined.
    Hierarchy,
}

impl RepresentationKind {
    pub fn is_path(&self) -> bool {
        matches!(self, RepresentationKind::Sice | RepresentationKind::Hierarchy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub kind: RepresentationKind,
    /// Number of penalty levels `T`.
    pub levels: usize,
    /// Smallest over largest penalty.
    pub ratio: f64,
    /// Regularizer of the covariance representations.
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl RepresentationConfig {
    pub fn new(kind: RepresentationKind) -> Self {
        let grid = GridSpec::default();
        let glasso = GlassoOptions::default();
        Self {
            kind,
            levels: grid.levels,
            ratio: grid.ratio,
            eps: DEFAULT_COV_EPS,
            tol: glasso.tol,
            max_iter: glasso.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_path() {
            GridSpec {
                levels: self.levels,
                ratio: self.ratio,
            }
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CliError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(CliError::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    /// Levels each representation produces.
    pub fn depth(&self) -> usize {
        if self.kind.is_path() {
            self.levels
        } else {
            1
        }
    }
}

/// Representation of every sample, in dataset order.
pub fn represent(dataset: &Dataset, cfg: &RepresentationConfig) -> Result<Vec<SiceHierarchy>> {
    cfg.validate()?;
    let opts = GlassoOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let grid = GridSpec {
        levels: cfg.levels,
        ratio: cfg.ratio,
    };
    let out = dataset
        .samples
        .par_iter()
        .map(|s| -> sicerp_core::Result<SiceHierarchy> {
            let single = |m| Ok(SiceHierarchy::single(s.id.clone(), cfg.eps, m));
            match cfg.kind {
                RepresentationKind::Cov => single(cov_rp(&s.features, cfg.eps).map_err(|e| e.for_sample(&s.id))?),
                RepresentationKind::Invcov => {
                    single(inverse_cov_rp(&s.features, cfg.eps).map_err(|e| e.for_sample(&s.id))?)
                }
                RepresentationKind::Sice | RepresentationKind::Hierarchy => {
                    sice_hierarchy_auto(&s.id, &s.features, grid, &opts)
                }
            }
        })
        .collect::<sicerp_core::Result<Vec<_>>>()?;
    Ok(out)
}
