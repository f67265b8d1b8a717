//! Sparse inverse covariance (SICE) representations for multivariate
//! sequences, kernels over hierarchies of such estimates, and SVM training
//! with level weights learned by minimizing the radius-margin bound.
//!
//! Module map:
//!
//! - [`spd`]: symmetric/SPD matrices, matrix logarithm, log-Euclidean kernel
//! - [`glasso`]: L1-penalized inverse covariance solver and its path
//! - [`representation`]: frame features, Cov-RP, InverseCov-RP, SICE hierarchies
//! - [`kernel`]: Gram blocks and the `k_β`, `k_M`, MKL and EMK hierarchy kernels
//! - [`svm`]: radius and L2-soft-margin duals, weight learning, one-vs-one models

pub mod error;
pub mod glasso;
pub mod kernel;
pub mod representation;
pub mod spd;
pub mod svm;

pub use error::{Error, Result};
