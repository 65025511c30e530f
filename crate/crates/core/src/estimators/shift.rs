use serde::Serialize;

use crate::data::{AdoptionTime, Dataset, DerivedWeights};
use crate::error::Result;
use crate::estimators::{fit, pair_order, EstimatorSpec, Level};
use crate::numeric::sum;

/// Effect of adding `m` to every outcome on the unadjusted I and T estimators.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub shift: f64,
    pub rows: Vec<ShiftRow>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftRow {
    pub j: usize,
    pub a: AdoptionTime,
    pub a_prime: AdoptionTime,
    /// `τ̂_I(Y + m) − τ̂_I(Y)`; zero up to rounding.
    pub delta_i: f64,
    /// `τ̂_T(Y + m) − τ̂_T(Y)`.
    pub delta_t: f64,
    /// `m · (mean_{G(a)} Iπ_ij· − mean_{G(a′)} Iπ_ij·)`.
    pub delta_t_analytic: f64,
}

impl ShiftReport {
    pub fn max_abs_delta_i(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.delta_i.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_t_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.delta_t - r.delta_t_analytic).abs())
            .fold(0.0, f64::max)
    }
}

pub fn location_shift_report(d: &Dataset, w: &DerivedWeights, m: f64) -> Result<ShiftReport> {
    let shifted = d.map_outcomes(|y| y + m);
    let ws = DerivedWeights::with_system(&shifted, w.system_arc().clone())?;
    let i_spec = EstimatorSpec::unadjusted(Level::Individual);
    let t_spec = EstimatorSpec::unadjusted(Level::Total);
    let (i0, i1) = (fit(d, w, &i_spec)?, fit(&shifted, &ws, &i_spec)?);
    let (t0, t1) = (fit(d, w, &t_spec)?, fit(&shifted, &ws, &t_spec)?);

    let periods = d.periods();
    let n = d.n_clusters() as f64;
    let arms = d.arms();
    let sys = w.system();
    let arm_mean = |a: AdoptionTime, j: usize| {
        let arm = a.arm(periods);
        let members: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == arm).collect();
        sum(members.iter().map(|&i| n * sys.pi_cell(i, j - 1))) / members.len() as f64
    };
    let mut rows = Vec::new();
    for (a, a_prime) in pair_order(periods) {
        for j in 1..=periods {
            rows.push(ShiftRow {
                j,
                a,
                a_prime,
                delta_i: i1.tau(j, a, a_prime) - i0.tau(j, a, a_prime),
                delta_t: t1.tau(j, a, a_prime) - t0.tau(j, a, a_prime),
                delta_t_analytic: m * (arm_mean(a, j) - arm_mean(a_prime, j)),
            });
        }
    }
    Ok(ShiftReport { shift: m, rows })
}
