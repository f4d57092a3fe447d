//! Subspace-based similarity, stability and multi-model stability selection
//! for linear variable selection with highly correlated predictors.

pub mod base;
pub mod baselines;
pub mod design;
pub mod error;
pub mod eval;
pub mod feature_set;
pub mod fsss;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod subsample;
pub mod synthetic;

pub use design::DesignMatrix;
pub use error::{Error, Result};
pub use feature_set::FeatureSet;
pub use linalg::{AvgProjection, SubspaceBasis};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
