//! Pair interpretation and summary estimands `θ = Σ b_j(a,a′) τ_j(a,a′)`.

use serde::{Deserialize, Serialize};

use crate::data::{AdoptionTime, WeightSystem};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimators::{pair_order, DwateEstimate};
use crate::numeric::sum;
use crate::variance::{summary_se, wald_ci, DwateCovariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    /// `j < a < a′`
    Anticipation,
    /// `a ≤ j < a′`
    Contrast,
    /// `a < a′ ≤ j`
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub class: PairClass,
    /// Set when `a′ = ∞`: WATE for `a ≤ j`, AWATE for `j < a`.
    pub never_tag: Option<NeverTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NeverTag {
    Wate,
    Awate,
}

impl Classification {
    /// Short label such as `duration` or `contrast/WATE`.
    pub fn label(&self) -> String {
        let base = match self.class {
            PairClass::Anticipation => "anticipation",
            PairClass::Contrast => "contrast",
            PairClass::Duration => "duration",
        };
        match self.never_tag {
            Some(NeverTag::Wate) => format!("{base}/WATE"),
            Some(NeverTag::Awate) => format!("{base}/AWATE"),
            None => base.to_string(),
        }
    }
}

/// Interpretation of `τ_j(a, a′)` for `a < a′` and one-based `j`.
pub fn classify_pair(j: usize, a: AdoptionTime, a_prime: AdoptionTime) -> Result<Classification> {
    if a >= a_prime {
        return Err(Error::InvalidPair(a, a_prime));
    }
    let p = AdoptionTime::Period(j);
    let class = if p < a {
        PairClass::Anticipation
    } else if p < a_prime {
        PairClass::Contrast
    } else {
        PairClass::Duration
    };
    let never_tag = (a_prime == AdoptionTime::Never).then(|| {
        if a <= p {
            NeverTag::Wate
        } else {
            NeverTag::Awate
        }
    });
    Ok(Classification { class, never_tag })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomTerm {
    pub j: usize,
    pub a: AdoptionTime,
    pub a_prime: AdoptionTime,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SummarySpec {
    /// Average of `WATE_j(a)`, `a ≤ j`, weighted by `w_·j·I(a)`.
    OwteSim,
    /// Average of `AWATE_j(a)`, `j < a ≤ J`, weighted by `w_·j·I(a)`.
    OawteSim,
    Custom {
        terms: Vec<CustomTerm>,
    },
}

impl SummarySpec {
    pub fn name(&self) -> &'static str {
        match self {
            SummarySpec::OwteSim => "owte_sim",
            SummarySpec::OawteSim => "oawte_sim",
            SummarySpec::Custom { .. } => "custom",
        }
    }

    /// Calendar-time average: within each period the treated `WATE_j(a)`
    /// weighted by `I(a)`, then an equal-weight average over periods.
    pub fn calendar_average(design: &DesignSpec) -> SummarySpec {
        let periods = design.periods();
        let mut terms = Vec::new();
        for j in 1..=periods {
            let treated: Vec<AdoptionTime> = (1..=j).map(AdoptionTime::Period).collect();
            let total: usize = treated.iter().map(|&a| design.arm_size(a)).sum();
            for a in treated {
                terms.push(CustomTerm {
                    j,
                    a,
                    a_prime: AdoptionTime::Never,
                    weight: design.arm_size(a) as f64 / total as f64 / periods as f64,
                });
            }
        }
        SummarySpec::Custom { terms }
    }
}

/// Position of `τ_j(a, a′)` in the stacked vector.
pub fn stacked_index(
    periods: usize,
    j: usize,
    a: AdoptionTime,
    a_prime: AdoptionTime,
) -> Result<usize> {
    if !(1..=periods).contains(&j) || !a.is_valid(periods) || !a_prime.is_valid(periods) {
        return Err(Error::InvalidPair(a, a_prime));
    }
    let pair = pair_order(periods)
        .iter()
        .position(|&p| p == (a, a_prime))
        .ok_or(Error::InvalidPair(a, a_prime))?;
    Ok(pair * periods + j - 1)
}

/// Contrast weights in stacking order, length `J·J(J+1)/2`.
pub fn build_b(spec: &SummarySpec, w: &WeightSystem, design: &DesignSpec) -> Result<Vec<f64>> {
    let periods = design.periods();
    let mut b = vec![0.0; periods * periods * (periods + 1) / 2];
    let mut support = Vec::new();
    match spec {
        SummarySpec::OwteSim | SummarySpec::OawteSim => {
            let anticipation = matches!(spec, SummarySpec::OawteSim);
            for j in 1..=periods {
                for a in (1..=periods).map(AdoptionTime::Period) {
                    let p = AdoptionTime::Period(j);
                    if (a <= p) != anticipation {
                        let weight = w.period_weight(j - 1) * design.arm_size(a) as f64;
                        support.push((stacked_index(periods, j, a, AdoptionTime::Never)?, weight));
                    }
                }
            }
            let total = sum(support.iter().map(|s| s.1));
            if support.is_empty() || !(total > 0.0) {
                return Err(Error::EmptySupport);
            }
            for (idx, weight) in support {
                b[idx] = weight / total;
            }
        }
        SummarySpec::Custom { terms } => {
            if terms.is_empty() {
                return Err(Error::EmptySupport);
            }
            for t in terms {
                if t.a >= t.a_prime {
                    return Err(Error::InvalidPair(t.a, t.a_prime));
                }
                b[stacked_index(periods, t.j, t.a, t.a_prime)?] += t.weight;
            }
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryEstimate {
    pub theta: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// `θ̂ = bᵀτ̂` with its standard error and Wald interval.
pub fn estimate_summary(
    fit: &DwateEstimate,
    cov: &DwateCovariance,
    b: &[f64],
    level: f64,
) -> Result<SummaryEstimate> {
    let pairs = fit.pairs();
    if b.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: b.len(),
        });
    }
    for (p, &bk) in pairs.iter().zip(b) {
        if bk != 0.0 && !p.tau.is_finite() {
            return Err(Error::MissingPair {
                period: p.j,
                a: p.a,
                a_prime: p.a_prime,
            });
        }
    }
    let theta = sum(pairs
        .iter()
        .zip(b)
        .filter(|(_, &bk)| bk != 0.0)
        .map(|(p, bk)| p.tau * bk));
    let se = summary_se(cov, b)?;
    Ok(SummaryEstimate {
        theta,
        se,
        ci: wald_ci(theta, se, level),
    })
}
