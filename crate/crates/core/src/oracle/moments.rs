use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{DerivedWeights, WeightScheme};
use crate::design::{
    enumerate_assignments, reveal_outcomes, sample_assignment_with, stream_rng, Assignment,
    DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::estimators::{fit, EstimatorSpec};
use crate::oracle::PotentialOutcomeTable;
use crate::variance::{sandwich_with, SandwichOptions};

/// Assignments processed per parallel batch; bounds memory on large supports.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    /// Enumerate when the support has at most this many assignments.
    pub cap: u64,
    /// Monte Carlo draws when the support is larger.
    pub draws: usize,
    pub seed: u64,
    pub sandwich: SandwichOptions,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            draws: 2000,
            seed: 0,
            sandwich: SandwichOptions::default(),
        }
    }
}

/// Randomization moments of `τ̂` (stacked order) and of the scaled
/// covariance estimate `I·Ĉov(τ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub assignments: usize,
    /// False when the moments come from Monte Carlo draws.
    pub exhaustive: bool,
    pub mean_tau: Vec<f64>,
    /// Exact covariance when exhaustive, otherwise the unbiased sample covariance.
    pub cov_tau: DMatrix<f64>,
    /// NaN when some arm has a single cluster.
    pub mean_scaled_cov: DMatrix<f64>,
    /// Mean estimated standard error of each stacked `τ̂` entry; NaN as above.
    pub mean_se: Vec<f64>,
    /// Monte Carlo standard error of each `mean_tau` entry (0 when exhaustive).
    pub mc_se: Vec<f64>,
}

impl Moments {
    /// `J × J` block of a stacked matrix for pair number `pair`.
    pub fn pair_block(m: &DMatrix<f64>, periods: usize, pair: usize) -> DMatrix<f64> {
        m.view((pair * periods, pair * periods), (periods, periods))
            .into_owned()
    }
}

struct Draw {
    tau: Vec<f64>,
    scaled_cov: DMatrix<f64>,
}

fn evaluate(
    po: &PotentialOutcomeTable,
    sys: &Arc<crate::data::WeightSystem>,
    spec: &EstimatorSpec,
    asg: &Assignment,
    opts: SandwichOptions,
) -> Result<Draw> {
    let d = reveal_outcomes(po, asg)?;
    let w = DerivedWeights::with_system(&d, Arc::clone(sys))?;
    let est = fit(&d, &w, spec)?;
    let dim = est.stacked_tau().len();
    let scaled_cov = match sandwich_with(&est, &d, &w, opts) {
        Ok(cov) => cov.stacked_cov() * po.n_clusters() as f64,
        // a single cluster in an arm leaves the variance estimator undefined
        Err(Error::InsufficientClusters { .. }) => DMatrix::from_element(dim, dim, f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(Draw {
        tau: est.stacked_tau(),
        scaled_cov,
    })
}

/// Moments over the full randomization distribution when it is small enough,
/// otherwise over `draws` seeded Monte Carlo assignments.
pub fn exhaustive_moments(
    po: &PotentialOutcomeTable,
    spec: &EstimatorSpec,
    scheme: WeightScheme,
    opts: MomentOptions,
) -> Result<Moments> {
    let sys = Arc::new(po.weight_system(scheme)?);
    let design = po.design().clone();
    let exhaustive = design.support_size() <= opts.cap as u128;
    let assignments: Box<dyn Iterator<Item = Assignment>> = if exhaustive {
        Box::new(enumerate_assignments(&design, opts.cap)?)
    } else {
        if opts.draws < 2 {
            return Err(Error::InvalidConfig(
                "Monte Carlo moments need at least 2 draws".into(),
            ));
        }
        let seed = opts.seed;
        Box::new((0..opts.draws as u64).map(move |r| {
            let mut rng = stream_rng(seed, r);
            sample_assignment_with(&design, &mut rng)
        }))
    };

    let dim = po.periods() * po.periods() * (po.periods() + 1) / 2;
    let n_clusters = po.n_clusters() as f64;
    let mut count = 0usize;
    let mut sum_tau = DVector::<f64>::zeros(dim);
    let mut sum_outer = DMatrix::<f64>::zeros(dim, dim);
    let mut sum_cov = DMatrix::<f64>::zeros(dim, dim);
    let mut sum_se = vec![0.0; dim];
    // shift by the first draw to keep the second moment well conditioned
    let mut origin: Option<DVector<f64>> = None;
    let mut iter = assignments.peekable();
    while iter.peek().is_some() {
        let batch: Vec<Assignment> = iter.by_ref().take(CHUNK).collect();
        let draws = batch
            .par_iter()
            .map(|asg| evaluate(po, &sys, spec, asg, opts.sandwich))
            .collect::<Result<Vec<_>>>()?;
        for d in draws {
            let t = DVector::from_vec(d.tau);
            let o = origin.get_or_insert_with(|| t.clone());
            let c = &t - &*o;
            sum_tau += &c;
            sum_outer.ger(1.0, &c, &c, 1.0);
            for (k, acc) in sum_se.iter_mut().enumerate() {
                let var = d.scaled_cov[(k, k)] / n_clusters;
                *acc += if var.is_nan() {
                    var
                } else {
                    var.max(0.0).sqrt()
                };
            }
            sum_cov += d.scaled_cov;
            count += 1;
        }
    }
    let nf = count as f64;
    let origin = origin.unwrap_or_else(|| DVector::zeros(dim));
    let mean_c = &sum_tau / nf;
    let denom = if exhaustive { nf } else { nf - 1.0 };
    let cov_tau = (sum_outer - &mean_c * mean_c.transpose() * nf) / denom;
    let cov_tau = (&cov_tau + cov_tau.transpose()) * 0.5;
    let mean_tau: Vec<f64> = (mean_c + origin).iter().copied().collect();
    let mc_se = if exhaustive {
        vec![0.0; dim]
    } else {
        (0..dim)
            .map(|k| (cov_tau[(k, k)].max(0.0) / nf).sqrt())
            .collect()
    };
    Ok(Moments {
        assignments: count,
        exhaustive,
        mean_tau,
        cov_tau,
        mean_scaled_cov: sum_cov / nf,
        mean_se: sum_se.iter().map(|s| s / nf).collect(),
        mc_se,
    })
}
