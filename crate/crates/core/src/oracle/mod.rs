//! Finite-population ground truth.
//!
//! Holds every potential outcome, evaluates the true estimands and the
//! design-based covariance constructions `V_c`/`V`, and checks exact
//! properties of the estimators by enumerating or sampling assignments.

mod efficiency;
mod moments;
mod residuals;
mod suite;
mod synthetic;
mod table;
mod truth;

pub use efficiency::{efficiency_inequalities, EfficiencyReport, EfficiencyTerms, InequalityCheck};
pub use moments::{exhaustive_moments, MomentOptions, Moments};
pub use residuals::{
    eps_tilde_series, finite_pop_variance, theorem_residuals, ClusterSeries, FinitePopVariance,
    VarianceDiagonal,
};
pub use suite::{run_suite, CheckResult, OracleReport, SuiteConfig};
pub use synthetic::{random_table, RandomTableConfig};
pub use table::{Aggregates, PotentialOutcomeTable};
pub use truth::{true_dwate, TrueDwate};
