//! Multifold cross-validation model averaging for generalized additive
//! partial linear models with exponential-family responses.

pub mod design;
pub mod error;
pub mod evaluate;
pub mod family;
pub mod fit;
pub mod importance;
mod par;
pub mod screening;
pub mod sim;
pub mod splines;
pub mod weights;

pub use design::{build_design, build_design_with_bases, build_designs, Dataset, DesignMatrix, ModelSpec};
pub use error::{Error, Result};
pub use evaluate::{kl_divergence, kl_real, kl_type_loss, LossRecord};
pub use family::{FamilyKind, FamilySpec};
pub use fit::{fit_mle, fit_mle_with, predict_eta, FitOptions, FittedCandidate};
pub use importance::{correct_weight_mass, vima, ImportanceReport};
pub use screening::{dcms_candidates, dcms_rank, dcorr_sq, ScreeningRanking};
pub use splines::{make_knots, KnotPlacement, KnotRule, SplineBasis};
pub use weights::{
    cv_criterion, cv_predictions, make_folds, optimize_weights, CvPredictionMatrix, FoldPartition, WeightMethod,
    WeightVector,
};
