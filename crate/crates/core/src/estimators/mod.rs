//! Regression estimators of `τ_j(a, a′)` at three data levels.
//!
//! All fits share one layout: the coefficient vector `β` has `J(J+1)`
//! entries in block order, `β[arm·J + j]` being the arm-`a` intercept in
//! period `j` (zero-based). Fully interacted and unadjusted models are solved
//! per `(j, a)` cell, ANCOVA per period; the global design is block diagonal
//! in exactly these groups.

mod blocks;
mod fit;
mod full;
mod shift;

use serde::{Deserialize, Serialize};

use crate::data::{AdoptionTime, Covariate, Frame, WeightScheme};
use crate::error::{Error, Result};

pub use fit::fit;
pub use full::{full_wls_oracle, OracleFit};
pub use shift::{location_shift_report, ShiftReport};

pub(crate) use blocks::{build_blocks, solve_block};

/// Level of the data entering the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Individual records, weights `π_ijk`, cluster-robust variance.
    Individual,
    /// Cluster-period averages `Ȳ_ij·`, weights `π_ij·`.
    Average,
    /// Scaled cluster-period totals `Ỹ_ij·`, unweighted.
    Total,
}

impl Level {
    pub fn short(self) -> &'static str {
        match self {
            Level::Individual => "I",
            Level::Average => "A",
            Level::Total => "T",
        }
    }

    /// Whether covariates are centered with the `π` system.
    pub(crate) fn weighted_centering(self) -> bool {
        self != Level::Total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    /// Arm-specific covariate slopes in every period.
    FullyInteracted,
    /// One slope per period shared across arms.
    Ancova,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub level: Level,
    pub adjustment: Adjustment,
    #[serde(default)]
    pub covariates: Vec<Covariate>,
}

impl EstimatorSpec {
    pub fn unadjusted(level: Level) -> Self {
        Self {
            level,
            adjustment: Adjustment::None,
            covariates: Vec::new(),
        }
    }

    pub fn adjusted(level: Level, covariates: Vec<Covariate>) -> Self {
        Self {
            level,
            adjustment: Adjustment::FullyInteracted,
            covariates,
        }
    }

    pub fn ancova(covariates: Vec<Covariate>) -> Self {
        Self {
            level: Level::Individual,
            adjustment: Adjustment::Ancova,
            covariates,
        }
    }

    pub fn validate(&self, frame: &Frame) -> Result<()> {
        match (self.adjustment, self.covariates.is_empty()) {
            (Adjustment::None, false) => {
                return Err(Error::UnsupportedSpec(
                    "covariates given for an unadjusted estimator".into(),
                ))
            }
            (Adjustment::FullyInteracted | Adjustment::Ancova, true) => {
                return Err(Error::UnsupportedSpec(
                    "adjusted estimator without covariates".into(),
                ))
            }
            _ => {}
        }
        if self.adjustment == Adjustment::Ancova && self.level != Level::Individual {
            return Err(Error::UnsupportedSpec(format!(
                "ANCOVA is only available for individual-level data, not level {}",
                self.level.short()
            )));
        }
        for (n, t) in self.covariates.iter().enumerate() {
            t.check(frame)?;
            if t.is_individual() && self.level != Level::Individual {
                return Err(Error::UnsupportedSpec(format!(
                    "individual covariate `{}` needs level I; use xbar(..) instead",
                    t.name(frame)
                )));
            }
            if self.covariates[..n].contains(t) {
                return Err(Error::UnsupportedSpec(format!(
                    "covariate `{}` listed twice",
                    t.name(frame)
                )));
            }
        }
        Ok(())
    }

    /// Human-readable name such as `I`, `I_adj[x_age]` or `T_adj[pi,pi*c_beds]`.
    pub fn label(&self, frame: &Frame) -> String {
        let base = self.level.short();
        let tag = match self.adjustment {
            Adjustment::None => return base.to_string(),
            Adjustment::FullyInteracted => "adj",
            Adjustment::Ancova => "ancova",
        };
        let names: Vec<String> = self.covariates.iter().map(|c| c.name(frame)).collect();
        format!("{base}_{tag}[{}]", names.join(","))
    }
}

/// Point estimates of one fitted estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DwateEstimate {
    pub spec: EstimatorSpec,
    pub scheme: WeightScheme,
    pub periods: usize,
    /// `β̂` in block order, length `J(J+1)`.
    pub beta: Vec<f64>,
    /// Covariate slopes per solve block (empty when unadjusted).
    pub gamma: Vec<Vec<f64>>,
    /// Residuals per solve block, in the row order of the block builder.
    pub residuals: Vec<Vec<f64>>,
    /// Terms dropped because they are constant in a period: `(period, term)`.
    pub dropped: Vec<(usize, Covariate)>,
}

/// Index of `β_j(a)` for zero-based period `j` and arm index `arm`.
pub fn beta_index(periods: usize, arm: usize, period: usize) -> usize {
    arm * periods + period
}

/// All ordered pairs `a < a′` in stacking order `(1,2), …, (1,∞), (2,3), …, (J,∞)`.
pub fn pair_order(periods: usize) -> Vec<(AdoptionTime, AdoptionTime)> {
    let all = AdoptionTime::all(periods);
    let mut out = Vec::new();
    for (n, &a) in all.iter().enumerate() {
        for &b in &all[n + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// One row of the pair table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEstimate {
    /// One-based period.
    pub j: usize,
    pub a: AdoptionTime,
    pub a_prime: AdoptionTime,
    pub tau: f64,
}

impl DwateEstimate {
    /// `β̂_j(a)` for one-based period `j`.
    pub fn beta(&self, j: usize, a: AdoptionTime) -> f64 {
        self.beta[beta_index(self.periods, a.arm(self.periods), j - 1)]
    }

    /// `τ̂_j(a, a′) = β̂_j(a) − β̂_j(a′)` for any ordered pair.
    pub fn tau(&self, j: usize, a: AdoptionTime, a_prime: AdoptionTime) -> f64 {
        if a == a_prime {
            return 0.0;
        }
        self.beta(j, a) - self.beta(j, a_prime)
    }

    /// Every `τ̂_j(a, a′)` with `a < a′`, pair-major in stacking order.
    pub fn pairs(&self) -> Vec<PairEstimate> {
        pair_order(self.periods)
            .into_iter()
            .flat_map(|(a, a_prime)| {
                (1..=self.periods).map(move |j| PairEstimate {
                    j,
                    a,
                    a_prime,
                    tau: self.tau(j, a, a_prime),
                })
            })
            .collect()
    }

    /// Stacked `τ̂` vector aligned with [`DwateEstimate::pairs`].
    pub fn stacked_tau(&self) -> Vec<f64> {
        self.pairs().iter().map(|p| p.tau).collect()
    }

    /// Serializable view `{pairs, beta, spec}`.
    pub fn report(&self, frame: &Frame) -> EstimateReport {
        EstimateReport {
            pairs: self.pairs(),
            beta: self.beta.clone(),
            spec: SpecReport {
                label: self.spec.label(frame),
                level: self.spec.level,
                adjustment: self.spec.adjustment,
                covariates: self.spec.covariates.iter().map(|c| c.name(frame)).collect(),
                weight_scheme: self.scheme,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub pairs: Vec<PairEstimate>,
    pub beta: Vec<f64>,
    pub spec: SpecReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecReport {
    pub label: String,
    pub level: Level,
    pub adjustment: Adjustment,
    pub covariates: Vec<String>,
    pub weight_scheme: WeightScheme,
}
