//! Kernel machines over hierarchy kernels.
//!
//! The level weights of a hierarchy kernel are learned by minimizing the
//! radius-margin bound `J = R²‖w‖²`, where `R²` comes from the smallest
//! enclosing ball ([`radius`]) and `‖w‖²` from the L2-soft-margin SVM dual
//! ([`dual`]). Multiclass problems are split one-vs-one ([`multiclass`]).

pub mod bound;
pub mod dual;
pub mod multiclass;
pub mod radius;

pub use bound::{
    gradient_weights, optimize_weights, project_simplex, project_simplex_matrix,
    radius_margin_objective, BoundEvaluation, BoundProblem, OptimizeOptions, Optimized,
    PairProblem, WeightGradient, WeightKind,
};
pub use dual::{solve_svm_l2, LabeledKernelSet, SvmDual};
pub use multiclass::{
    predict, train_multiclass, IntegratorKind, Prediction, TrainConfig, TrainedClassifier,
};
pub use radius::{solve_radius, RadiusOptions, RadiusSolution, ShiftPolicy};
