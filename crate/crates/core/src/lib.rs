//! Design-based estimation for staggered rollout cluster randomized
//! experiments.

pub mod data;
pub mod design;
pub mod error;
pub mod estimands;
pub mod estimators;
pub mod linalg;
pub mod numeric;
pub mod oracle;
pub mod sim;
pub mod variance;

pub use data::{
    load_dataset, AdoptionTime, ColumnSchema, Covariate, Dataset, DerivedWeights, WeightScheme,
    WeightSystem,
};
pub use design::{Assignment, DesignSpec};
pub use error::{Error, Result};
pub use estimands::{build_b, classify_pair, estimate_summary, PairClass, SummarySpec};
pub use estimators::{fit, full_wls_oracle, Adjustment, DwateEstimate, EstimatorSpec, Level};
pub use oracle::PotentialOutcomeTable;
pub use variance::{sandwich, sandwich_with, DwateCovariance, SandwichOptions, VarianceKind};
