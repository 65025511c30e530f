use thiserror::Error;

use crate::data::AdoptionTime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- input / dataset ----
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("periods are not contiguous integers: {0:?}")]
    NonContiguousPeriods(Vec<i64>),
    #[error("cluster `{cluster}` has no records in period {period}")]
    EmptyClusterPeriod { cluster: String, period: usize },
    #[error("non-finite value in column `{column}` (record {record})")]
    NonFiniteValue { record: usize, column: String },
    #[error("invalid value `{value}` in column `{column}` (record {record})")]
    InvalidValue {
        record: usize,
        column: String,
        value: String,
    },
    #[error("cluster `{0}` has more than one adoption time")]
    InconsistentAdoption(String),
    #[error("cluster-period covariates missing for cluster `{cluster}` period {period}")]
    MissingClusterCovariates { cluster: String, period: usize },
    #[error("negative weight in cluster `{cluster}` period {period}")]
    NegativeWeight { cluster: String, period: usize },
    #[error("total weight is zero in period {0}")]
    ZeroTotalWeight(usize),
    #[error("dataset has no `weight` column but a custom weight scheme was requested")]
    MissingWeightColumn,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    // ---- design ----
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("enumeration needs {count} assignments, cap is {cap}")]
    EnumerationTooLarge { count: String, cap: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // ---- estimators ----
    #[error("unsupported estimator: {0}")]
    UnsupportedSpec(String),
    #[error("no clusters adopt at {arm} (period {period})")]
    EmptyArm { period: usize, arm: AdoptionTime },
    #[error("arm {arm} has {have} clusters, adjusted fit needs at least {need}")]
    TooFewClusters {
        arm: AdoptionTime,
        have: usize,
        need: usize,
    },
    #[error("singular normal equations in period {period}, arm {arm:?}")]
    SingularNormalEquations {
        period: usize,
        arm: Option<AdoptionTime>,
    },
    #[error("covariate `{term}` is degenerate in period {period}")]
    RankDeficientCovariates { term: String, period: usize },

    // ---- variance ----
    #[error("invalid adoption-time pair ({0}, {1})")]
    InvalidPair(AdoptionTime, AdoptionTime),
    #[error("sandwich bread is singular (period {period})")]
    SingularBread { period: usize },
    #[error("arm {arm} has {have} clusters; variance estimation needs at least 2")]
    InsufficientClusters { arm: AdoptionTime, have: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    // ---- estimands ----
    #[error("summary estimand has empty support")]
    EmptySupport,
    #[error("fit does not cover pair ({a}, {a_prime}) in period {period}")]
    MissingPair {
        period: usize,
        a: AdoptionTime,
        a_prime: AdoptionTime,
    },

    // ---- oracle / simulation ----
    #[error("oracle regression is singular: {0}")]
    SingularOracleFit(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("equivalence violated in replication {replication}: {detail}")]
    EquivalenceViolation { replication: usize, detail: String },
}

impl Error {
    /// Stable machine-readable code used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "missing_column",
            Error::NonContiguousPeriods(_) => "non_contiguous_periods",
            Error::EmptyClusterPeriod { .. } => "empty_cluster_period",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::InvalidValue { .. } => "invalid_value",
            Error::InconsistentAdoption(_) => "inconsistent_adoption",
            Error::MissingClusterCovariates { .. } => "missing_cluster_covariates",
            Error::NegativeWeight { .. } => "negative_weight",
            Error::ZeroTotalWeight(_) => "zero_total_weight",
            Error::MissingWeightColumn => "missing_weight_column",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::InvalidDesign(_) => "invalid_design",
            Error::EnumerationTooLarge { .. } => "enumeration_too_large",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::UnsupportedSpec(_) => "unsupported_spec",
            Error::EmptyArm { .. } => "empty_arm",
            Error::TooFewClusters { .. } => "too_few_clusters",
            Error::SingularNormalEquations { .. } => "singular_normal_equations",
            Error::RankDeficientCovariates { .. } => "rank_deficient_covariates",
            Error::InvalidPair(..) => "invalid_pair",
            Error::SingularBread { .. } => "singular_bread",
            Error::InsufficientClusters { .. } => "insufficient_clusters",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptySupport => "empty_support",
            Error::MissingPair { .. } => "missing_pair",
            Error::SingularOracleFit(_) => "singular_oracle_fit",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EquivalenceViolation { .. } => "equivalence_violation",
        }
    }

    /// True for numerical failures of a fit (as opposed to bad input).
    pub fn is_singular(&self) -> bool {
        matches!(
            self,
            Error::SingularNormalEquations { .. }
                | Error::RankDeficientCovariates { .. }
                | Error::SingularBread { .. }
                | Error::SingularOracleFit(_)
        )
    }
}
