use serde::Serialize;

use crate::data::{AdoptionTime, Covariate, Frame, WeightScheme};
use crate::error::Result;
use crate::estimators::{pair_order, EstimatorSpec, Level};
use crate::oracle::{finite_pop_variance, theorem_residuals, PotentialOutcomeTable};

/// Covariate sets entering the efficiency comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTerms {
    /// Individual terms for the adjusted individual-level estimator.
    pub individual: Vec<Covariate>,
    /// Cluster-level terms for the adjusted average-level estimator.
    pub cluster: Vec<Covariate>,
}

impl EfficiencyTerms {
    /// Every `x` column at the individual level; every `c` column at the
    /// average level, or the cell means `X̄` when there are none.
    pub fn all(frame: &Frame) -> Self {
        let cluster = if frame.pc() > 0 {
            (0..frame.pc()).map(Covariate::C).collect()
        } else {
            (0..frame.px()).map(Covariate::XBar).collect()
        };
        Self {
            individual: (0..frame.px()).map(Covariate::X).collect(),
            cluster,
        }
    }

    /// `π·C` counterparts of the cluster terms; `π·X̄` is `X̃` up to scale.
    fn pi_scaled_cluster(&self) -> Vec<Covariate> {
        self.cluster
            .iter()
            .filter_map(|&t| match t {
                Covariate::C(k) => Some(Covariate::PiC(k)),
                Covariate::XBar(k) | Covariate::X(k) | Covariate::XTilde(k) => {
                    Some(Covariate::XTilde(k))
                }
                Covariate::PiC(k) => Some(Covariate::PiC(k)),
                Covariate::Pi => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub j: usize,
    pub a: AdoptionTime,
    pub a_prime: AdoptionTime,
    /// Diagonal `V` entry of the estimator claimed to be at least as efficient.
    pub lhs: f64,
    pub rhs: f64,
    /// `(rhs − lhs) / max(|rhs|, |lhs|)`, 0 when both vanish.
    pub slack: f64,
}

impl InequalityCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub scheme: WeightScheme,
    /// Orderings that hold in every finite population.
    pub checks: Vec<InequalityCheck>,
    /// Orderings that may fail; reported, never asserted.
    pub informational: Vec<InequalityCheck>,
}

impl EfficiencyReport {
    pub fn min_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_hold(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.holds(tol))
    }

    /// Informational comparisons that went the "wrong" way.
    pub fn flagged(&self) -> Vec<&InequalityCheck> {
        self.informational
            .iter()
            .filter(|c| c.slack < 0.0)
            .collect()
    }
}

/// Estimators compared in the efficiency report, with their labels.
fn roster(terms: &EfficiencyTerms) -> Vec<(&'static str, EstimatorSpec)> {
    let mut t_x = vec![Covariate::Pi];
    t_x.extend(terms.individual.iter().map(|t| match *t {
        Covariate::X(k) | Covariate::XBar(k) => Covariate::XTilde(k),
        other => other,
    }));
    let mut t_c = vec![Covariate::Pi];
    t_c.extend(terms.pi_scaled_cluster());
    vec![
        ("T[pi,xtilde]", EstimatorSpec::adjusted(Level::Total, t_x)),
        (
            "T[pi]",
            EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi]),
        ),
        ("I", EstimatorSpec::unadjusted(Level::Individual)),
        (
            "I_adj",
            EstimatorSpec::adjusted(Level::Individual, terms.individual.clone()),
        ),
        ("T[pi,pi*c]", EstimatorSpec::adjusted(Level::Total, t_c)),
        ("A", EstimatorSpec::unadjusted(Level::Average)),
        (
            "A_adj",
            EstimatorSpec::adjusted(Level::Average, terms.cluster.clone()),
        ),
    ]
}

const CHAINS: [(&str, &str); 6] = [
    ("T[pi,xtilde]", "T[pi]"),
    ("T[pi]", "I"),
    ("T[pi,xtilde]", "I_adj"),
    ("T[pi,pi*c]", "T[pi]"),
    ("T[pi]", "A"),
    ("T[pi,pi*c]", "A_adj"),
];

const INFORMATIONAL: [(&str, &str); 2] = [("I_adj", "I"), ("A_adj", "A")];

/// Compare the diagonal of `V` across estimators for every pair and period.
pub fn efficiency_inequalities(
    po: &PotentialOutcomeTable,
    scheme: WeightScheme,
    terms: &EfficiencyTerms,
) -> Result<EfficiencyReport> {
    let sys = po.weight_system(scheme)?;
    let periods = po.periods();
    let roster = roster(terms);
    let mut series = Vec::with_capacity(roster.len());
    for (name, spec) in &roster {
        series.push((*name, theorem_residuals(po, &sys, spec)?));
    }
    let lookup = |name: &str| &series.iter().find(|s| s.0 == name).expect("roster entry").1;
    let mut checks = Vec::new();
    let mut informational = Vec::new();
    for (a, a_prime) in pair_order(periods) {
        let diag = |name: &str| -> Result<Vec<f64>> {
            let v = finite_pop_variance(lookup(name), po.design(), a, a_prime)?;
            Ok((0..periods).map(|j| v.v[(j, j)]).collect())
        };
        for (pairs, out) in [
            (&CHAINS[..], &mut checks),
            (&INFORMATIONAL[..], &mut informational),
        ] {
            for &(lhs_name, rhs_name) in pairs {
                let (lhs, rhs) = (diag(lhs_name)?, diag(rhs_name)?);
                for j in 0..periods {
                    let scale = lhs[j].abs().max(rhs[j].abs());
                    out.push(InequalityCheck {
                        name: format!("{lhs_name} <= {rhs_name}"),
                        j: j + 1,
                        a,
                        a_prime,
                        lhs: lhs[j],
                        rhs: rhs[j],
                        slack: if scale > 0.0 {
                            (rhs[j] - lhs[j]) / scale
                        } else {
                            0.0
                        },
                    });
                }
            }
        }
    }
    Ok(EfficiencyReport {
        scheme,
        checks,
        informational,
    })
}
