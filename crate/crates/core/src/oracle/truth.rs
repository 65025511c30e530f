use serde::Serialize;

use crate::data::{AdoptionTime, WeightScheme};
use crate::error::{Error, Result};
use crate::estimators::pair_order;
use crate::numeric::sum;
use crate::oracle::PotentialOutcomeTable;

/// True `τ_j(a, a′)` for every ordered pair, in stacking order.
///
/// Three routes are evaluated independently: individual weights `π_ijk`
/// normalised from the raw weights, cluster-period averages weighted by
/// `π_ij·`, and unweighted means of the scaled totals `Ỹ_ij·`. They agree up
/// to rounding; `tau` reports the average route.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueDwate {
    pub periods: usize,
    pub scheme: WeightScheme,
    pub tau: Vec<f64>,
    pub individual: Vec<f64>,
    pub total: Vec<f64>,
}

impl TrueDwate {
    /// `τ_j(a, a′)` for one-based `j`.
    pub fn tau(&self, j: usize, a: AdoptionTime, a_prime: AdoptionTime) -> Result<f64> {
        let idx = crate::estimands::stacked_index(self.periods, j, a, a_prime)?;
        Ok(self.tau[idx])
    }

    /// Largest disagreement among the routes, relative to `max(1, |τ|)`.
    pub fn max_route_discrepancy(&self) -> f64 {
        self.tau
            .iter()
            .zip(&self.individual)
            .zip(&self.total)
            .map(|((&m, &i), &t)| {
                let scale = m.abs().max(1.0);
                ((m - i).abs().max((m - t).abs()).max((i - t).abs())) / scale
            })
            .fold(0.0, f64::max)
    }

    /// `θ = bᵀτ`
    pub fn theta(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.tau.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tau.len(),
                got: b.len(),
            });
        }
        Ok(sum(self.tau.iter().zip(b).map(|(t, w)| t * w)))
    }
}

pub fn true_dwate(po: &PotentialOutcomeTable, scheme: WeightScheme) -> Result<TrueDwate> {
    let frame = po.frame();
    let (n, periods) = (po.n_clusters(), po.periods());
    let sys = po.weight_system(scheme)?;
    let agg = po.aggregates(&sys);

    // individual route straight from the raw weights
    let mut means_ind = vec![vec![0.0; periods]; periods + 1];
    for j in 0..periods {
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let cell = frame.cell(i, j);
                match scheme {
                    WeightScheme::UniformIndividual => vec![1.0; cell.size],
                    WeightScheme::InverseClusterPeriodSize => {
                        vec![1.0 / cell.size as f64; cell.size]
                    }
                    WeightScheme::CustomColumn => cell.weights.clone().unwrap_or_default(),
                }
            })
            .collect();
        let total = sum(raw.iter().flatten().copied());
        for (arm, m) in means_ind.iter_mut().enumerate() {
            let a = AdoptionTime::from_arm(arm, periods);
            m[j] = sum((0..n).flat_map(|i| {
                raw[i]
                    .iter()
                    .zip(po.outcomes(i, a, j))
                    .map(|(w, y)| w / total * y)
                    .collect::<Vec<_>>()
            }));
        }
    }

    let mut tau = Vec::new();
    let mut individual = Vec::new();
    let mut total = Vec::new();
    for (a, b) in pair_order(periods) {
        let (ia, ib) = (a.arm(periods), b.arm(periods));
        for j in 0..periods {
            tau.push(sum((0..n).map(|i| {
                sys.pi_cell(i, j) * (agg.ybar(ia, i, j) - agg.ybar(ib, i, j))
            })));
            individual.push(means_ind[ia][j] - means_ind[ib][j]);
            total.push(sum((0..n).map(|i| agg.ytilde(ia, i, j) - agg.ytilde(ib, i, j))) / n as f64);
        }
    }
    Ok(TrueDwate {
        periods,
        scheme,
        tau,
        individual,
        total,
    })
}
