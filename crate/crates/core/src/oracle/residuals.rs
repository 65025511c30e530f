use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{AdoptionTime, Covariate, WeightSystem};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimators::{Adjustment, EstimatorSpec, Level};
use crate::linalg::weighted_least_squares;
use crate::oracle::table::Aggregates;
use crate::oracle::PotentialOutcomeTable;

/// A cluster-period series for every arm, indexed `[arm][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSeries {
    pub periods: usize,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl ClusterSeries {
    pub fn get(&self, a: AdoptionTime, i: usize, j: usize) -> f64 {
        self.values[a.arm(self.periods)][i][j]
    }

    pub fn n_clusters(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// `V_c` and `V` for one pair, both `J × J`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopVariance {
    /// `Σ_i [ξ(a)ξ(a)ᵀ/I(a) + ξ(a′)ξ(a′)ᵀ/I(a′)]`
    pub vc: DMatrix<f64>,
    /// `V_c − I⁻¹ Σ_i (ξ(a) − ξ(a′))(ξ(a) − ξ(a′))ᵀ`
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDiagonal {
    pub j: usize,
    pub vc: f64,
    pub v: f64,
}

impl FinitePopVariance {
    pub fn diagonal(&self) -> Vec<VarianceDiagonal> {
        (0..self.v.nrows())
            .map(|j| VarianceDiagonal {
                j: j + 1,
                vc: self.vc[(j, j)],
                v: self.v[(j, j)],
            })
            .collect()
    }
}

pub fn finite_pop_variance(
    series: &ClusterSeries,
    design: &DesignSpec,
    a: AdoptionTime,
    a_prime: AdoptionTime,
) -> Result<FinitePopVariance> {
    let periods = series.periods;
    if a == a_prime || !a.is_valid(periods) || !a_prime.is_valid(periods) {
        return Err(Error::InvalidPair(a, a_prime));
    }
    let n = series.n_clusters();
    if design.n_clusters() != n || design.periods() != periods {
        return Err(Error::ShapeMismatch("series and design disagree".into()));
    }
    let (na, nb) = (design.arm_size(a) as f64, design.arm_size(a_prime) as f64);
    let mut vc = DMatrix::zeros(periods, periods);
    let mut diff = DMatrix::zeros(periods, periods);
    for i in 0..n {
        for r in 0..periods {
            for s in 0..periods {
                let (xa_r, xa_s) = (series.get(a, i, r), series.get(a, i, s));
                let (xb_r, xb_s) = (series.get(a_prime, i, r), series.get(a_prime, i, s));
                vc[(r, s)] += xa_r * xa_s / na + xb_r * xb_s / nb;
                diff[(r, s)] += (xa_r - xb_r) * (xa_s - xb_s);
            }
        }
    }
    let v = &vc - diff / n as f64;
    Ok(FinitePopVariance { vc, v })
}

/// `ε̃_ij·(a)` for every arm.
pub fn eps_tilde_series(po: &PotentialOutcomeTable, sys: &WeightSystem) -> ClusterSeries {
    let agg = po.aggregates(sys);
    series_from(po, |arm, i, j| agg.eps_tilde(arm, i, j))
}

fn series_from(
    po: &PotentialOutcomeTable,
    f: impl Fn(usize, usize, usize) -> f64,
) -> ClusterSeries {
    let (n, periods) = (po.n_clusters(), po.periods());
    ClusterSeries {
        periods,
        values: (0..=periods)
            .map(|arm| {
                (0..n)
                    .map(|i| (0..periods).map(|j| f(arm, i, j)).collect())
                    .collect()
            })
            .collect(),
    }
}

/// Centered, non-degenerate terms of one period.
struct Terms {
    keep: Vec<Covariate>,
    centers: Vec<f64>,
}

fn period_terms(sys: &WeightSystem, terms: &[Covariate], j: usize, weighted: bool) -> Terms {
    let n = sys.n_clusters();
    let frame = sys.frame();
    let mut keep = Vec::new();
    let mut centers = Vec::new();
    for &t in terms {
        let c = sys.center(t, j, weighted);
        let (mut raw_max, mut dev_max) = (0.0_f64, 0.0_f64);
        for i in 0..n {
            let size = frame.cell(i, j).size;
            let vals: Vec<f64> = if t.is_individual() {
                (0..size).map(|k| sys.individual_term(t, i, j, k)).collect()
            } else {
                vec![sys.cell_term(t, i, j)]
            };
            for v in vals {
                raw_max = raw_max.max(v.abs());
                dev_max = dev_max.max((v - c).abs());
            }
        }
        if dev_max > 1e-10 * raw_max {
            keep.push(t);
            centers.push(c);
        }
    }
    Terms { keep, centers }
}

fn solve(design: Vec<f64>, y: Vec<f64>, v: Vec<f64>, p: usize, what: &str) -> Result<Vec<f64>> {
    weighted_least_squares(&design, &y, &v, p)
        .map(|(coef, _)| coef)
        .map_err(|e| Error::SingularOracleFit(format!("{what}, condition {:e}", e.condition)))
}

/// Slopes `γ_I(a)` of period `j`: `π_ijk`-weighted fit of `Y_ijk(a)` on
/// `(1, z^c_ijk)` over the whole population.
fn individual_slopes(
    po: &PotentialOutcomeTable,
    sys: &WeightSystem,
    terms: &Terms,
    arm: usize,
    j: usize,
) -> Result<Vec<f64>> {
    let p = terms.keep.len() + 1;
    let a = AdoptionTime::from_arm(arm, po.periods());
    let (mut design, mut y, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..po.n_clusters() {
        for (k, &yk) in po.outcomes(i, a, j).iter().enumerate() {
            design.push(1.0);
            for (&t, c) in terms.keep.iter().zip(&terms.centers) {
                design.push(sys.individual_term(t, i, j, k) - c);
            }
            y.push(yk);
            v.push(sys.pi(i, j)[k]);
        }
    }
    let coef = solve(
        design,
        y,
        v,
        p,
        &format!("individual slopes, arm {a}, period {}", j + 1),
    )?;
    Ok(coef[1..].to_vec())
}

/// Slopes from a cluster-period fit of `response` on `(1, z^c_ij)`.
fn cell_slopes(
    sys: &WeightSystem,
    terms: &Terms,
    j: usize,
    response: impl Fn(usize) -> f64,
    weight: impl Fn(usize) -> f64,
    what: &str,
) -> Result<Vec<f64>> {
    let p = terms.keep.len() + 1;
    let (mut design, mut y, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..sys.n_clusters() {
        design.push(1.0);
        for (&t, c) in terms.keep.iter().zip(&terms.centers) {
            design.push(sys.cell_term(t, i, j) - c);
        }
        y.push(response(i));
        v.push(weight(i));
    }
    let coef = solve(design, y, v, p, what)?;
    Ok(coef[1..].to_vec())
}

fn dot_centered(sys: &WeightSystem, terms: &Terms, i: usize, j: usize, gamma: &[f64]) -> f64 {
    terms
        .keep
        .iter()
        .zip(&terms.centers)
        .zip(gamma)
        .map(|((&t, c), g)| (sys.cell_term(t, i, j) - c) * g)
        .sum()
}

/// Population residual series whose `V` is the limiting scaled variance of
/// the estimator `spec`.
pub fn theorem_residuals(
    po: &PotentialOutcomeTable,
    sys: &WeightSystem,
    spec: &EstimatorSpec,
) -> Result<ClusterSeries> {
    spec.validate(po.frame())?;
    let (n, periods) = (po.n_clusters(), po.periods());
    let nf = n as f64;
    let agg: Aggregates = po.aggregates(sys);
    if spec.adjustment == Adjustment::None {
        return Ok(match spec.level {
            Level::Total => series_from(po, |arm, i, j| {
                agg.ytilde(arm, i, j) - agg.period_mean(arm, j)
            }),
            _ => series_from(po, |arm, i, j| agg.eps_tilde(arm, i, j)),
        });
    }
    let weighted = spec.level.weighted_centering();
    let mut values = vec![vec![vec![0.0; periods]; n]; periods + 1];
    for j in 0..periods {
        let terms = period_terms(sys, &spec.covariates, j, weighted);
        let mut slopes = Vec::with_capacity(periods + 1);
        for arm in 0..=periods {
            let a = AdoptionTime::from_arm(arm, periods);
            let what = format!("{} slopes, arm {a}, period {}", spec.level.short(), j + 1);
            slopes.push(if terms.keep.is_empty() {
                Vec::new()
            } else {
                match spec.level {
                    Level::Individual => individual_slopes(po, sys, &terms, arm, j)?,
                    Level::Average => cell_slopes(
                        sys,
                        &terms,
                        j,
                        |i| agg.ybar(arm, i, j),
                        |i| sys.pi_cell(i, j),
                        &what,
                    )?,
                    Level::Total => {
                        cell_slopes(sys, &terms, j, |i| agg.ytilde(arm, i, j), |_| 1.0, &what)?
                    }
                }
            });
        }
        if spec.adjustment == Adjustment::Ancova {
            let design = po.design();
            let mut pooled = vec![0.0; terms.keep.len()];
            for (arm, g) in slopes.iter().enumerate() {
                let q = design.arm_size(AdoptionTime::from_arm(arm, periods)) as f64 / nf;
                for (acc, x) in pooled.iter_mut().zip(g) {
                    *acc += q * x;
                }
            }
            slopes = vec![pooled; periods + 1];
        }
        for (arm, g) in slopes.iter().enumerate() {
            for i in 0..n {
                let fitted = dot_centered(sys, &terms, i, j, g);
                values[arm][i][j] = match spec.level {
                    Level::Total => agg.ytilde(arm, i, j) - agg.period_mean(arm, j) - fitted,
                    _ => agg.eps_tilde(arm, i, j) - nf * sys.pi_cell(i, j) * fitted,
                };
            }
        }
    }
    Ok(ClusterSeries { periods, values })
}
