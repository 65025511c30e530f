//! Independent verification path: one weighted least-squares solve on the
//! literal stacked design matrix, with its own weights, aggregates and
//! centering constants recomputed from the raw frame.

use nalgebra::DMatrix;

use crate::data::{AdoptionTime, Covariate, Dataset, DerivedWeights, WeightScheme};
use crate::error::{Error, Result};
use crate::estimators::{beta_index, Adjustment, DwateEstimate, EstimatorSpec, Level};
use crate::linalg::weighted_least_squares;

/// Full-matrix fit and the `β` block of its sandwich `B·M·B`.
#[derive(Debug, Clone)]
pub struct OracleFit {
    /// `gamma` follows the block layout of [`crate::estimators::fit`];
    /// `residuals` is left empty.
    pub estimate: DwateEstimate,
    /// `J(J+1) × J(J+1)` covariance of `β̂` without small-sample correction.
    pub beta_cov: DMatrix<f64>,
}

struct Raw {
    /// `π_ijk`
    pi: Vec<Vec<Vec<f64>>>,
    /// `π_ij·`
    pi_cell: Vec<Vec<f64>>,
}

fn raw_weights(d: &Dataset, scheme: WeightScheme) -> Result<Raw> {
    let f = d.frame();
    let (n, periods) = (d.n_clusters(), d.periods());
    let mut w = vec![vec![Vec::new(); periods]; n];
    for i in 0..n {
        for j in 0..periods {
            let cell = f.cell(i, j);
            w[i][j] = match scheme {
                WeightScheme::UniformIndividual => vec![1.0; cell.size],
                WeightScheme::InverseClusterPeriodSize => vec![1.0 / cell.size as f64; cell.size],
                WeightScheme::CustomColumn => {
                    cell.weights.clone().ok_or(Error::MissingWeightColumn)?
                }
            };
        }
    }
    let mut pi = w.clone();
    let mut pi_cell = vec![vec![0.0; periods]; n];
    for j in 0..periods {
        let total: f64 = (0..n).map(|i| w[i][j].iter().sum::<f64>()).sum();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalWeight(j + 1));
        }
        for i in 0..n {
            for x in pi[i][j].iter_mut() {
                *x /= total;
            }
            pi_cell[i][j] = pi[i][j].iter().sum();
        }
    }
    Ok(Raw { pi, pi_cell })
}

impl Raw {
    fn cell_mean(&self, i: usize, j: usize, values: impl Iterator<Item = f64>) -> f64 {
        let pc = self.pi_cell[i][j];
        let vals: Vec<f64> = values.collect();
        if pc > 0.0 {
            self.pi[i][j]
                .iter()
                .zip(&vals)
                .map(|(p, v)| p * v)
                .sum::<f64>()
                / pc
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    fn term(&self, d: &Dataset, t: Covariate, i: usize, j: usize, k: Option<usize>) -> f64 {
        let f = d.frame();
        let cell = f.cell(i, j);
        let px = f.px();
        let xbar = |c: usize| self.cell_mean(i, j, (0..cell.size).map(|r| cell.x[r * px + c]));
        match t {
            Covariate::X(c) => match k {
                Some(k) => cell.x[k * px + c],
                None => xbar(c),
            },
            Covariate::XBar(c) => xbar(c),
            Covariate::C(c) => cell.c[c],
            Covariate::Pi => self.pi_cell[i][j],
            Covariate::PiC(c) => self.pi_cell[i][j] * cell.c[c],
            Covariate::XTilde(c) => d.n_clusters() as f64 * self.pi_cell[i][j] * xbar(c),
        }
    }
}

struct Row {
    cluster: usize,
    period: usize,
    y: f64,
    v: f64,
    /// Raw (uncentered) term values.
    z: Vec<f64>,
}

pub fn full_wls_oracle(d: &Dataset, w: &DerivedWeights, spec: &EstimatorSpec) -> Result<OracleFit> {
    let frame = d.frame();
    spec.validate(frame)?;
    let (n, periods) = (d.n_clusters(), d.periods());
    let raw = raw_weights(d, w.scheme())?;
    let arms = d.arms();
    let counts = d.arm_counts();
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyArm {
            period: 1,
            arm: AdoptionTime::from_arm(a, periods),
        });
    }
    let terms = &spec.covariates;

    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..periods {
            let ys = d.outcomes(i, j);
            let ybar = raw.cell_mean(i, j, ys.iter().copied());
            match spec.level {
                Level::Individual => {
                    for (k, &y) in ys.iter().enumerate() {
                        rows.push(Row {
                            cluster: i,
                            period: j,
                            y,
                            v: raw.pi[i][j][k],
                            z: terms
                                .iter()
                                .map(|&t| raw.term(d, t, i, j, Some(k)))
                                .collect(),
                        });
                    }
                }
                Level::Average | Level::Total => {
                    let (y, v) = if spec.level == Level::Average {
                        (ybar, raw.pi_cell[i][j])
                    } else {
                        (n as f64 * raw.pi_cell[i][j] * ybar, 1.0)
                    };
                    rows.push(Row {
                        cluster: i,
                        period: j,
                        y,
                        v,
                        z: terms.iter().map(|&t| raw.term(d, t, i, j, None)).collect(),
                    });
                }
            }
        }
    }

    // centering: regression-weighted full-sample means (π at I/A, 1/I at T)
    let mut centers = vec![vec![0.0; terms.len()]; periods];
    let mut keep = vec![vec![true; terms.len()]; periods];
    let mut dropped = Vec::new();
    for j in 0..periods {
        let in_period = || rows.iter().filter(move |r| r.period == j);
        let cw = |r: &Row| match spec.level {
            Level::Total => 1.0 / n as f64,
            _ => r.v,
        };
        let total: f64 = in_period().map(cw).sum();
        for (t, &term) in terms.iter().enumerate() {
            let c = in_period().map(|r| cw(r) * r.z[t]).sum::<f64>() / total;
            centers[j][t] = c;
            let raw_max = in_period().map(|r| r.z[t].abs()).fold(0.0, f64::max);
            let dev_max = in_period().map(|r| (r.z[t] - c).abs()).fold(0.0, f64::max);
            if dev_max <= 1e-10 * raw_max {
                if term == Covariate::Pi {
                    keep[j][t] = false;
                    dropped.push((j + 1, term));
                } else {
                    return Err(Error::RankDeficientCovariates {
                        term: term.name(frame),
                        period: j + 1,
                    });
                }
            }
        }
    }
    let p_of = |j: usize| keep[j].iter().filter(|&&k| k).count();
    if spec.adjustment != Adjustment::None {
        let p = (0..periods).map(p_of).max().unwrap_or(0);
        for (a, &have) in counts.iter().enumerate() {
            if have < p + 2 {
                return Err(Error::TooFewClusters {
                    arm: AdoptionTime::from_arm(a, periods),
                    have,
                    need: p + 2,
                });
            }
        }
    }

    // column layout
    let n_beta = periods * (periods + 1);
    let mut slope_offset = vec![vec![0usize; periods]; periods + 1];
    let mut cols = n_beta;
    match spec.adjustment {
        Adjustment::None => {}
        Adjustment::FullyInteracted => {
            for offs in slope_offset.iter_mut() {
                for (j, off) in offs.iter_mut().enumerate() {
                    *off = cols;
                    cols += p_of(j);
                }
            }
        }
        Adjustment::Ancova => {
            for j in 0..periods {
                for offs in slope_offset.iter_mut() {
                    offs[j] = cols;
                }
                cols += p_of(j);
            }
        }
    }
    let p = cols;
    let mut design = vec![0.0; rows.len() * p];
    for (r, row) in rows.iter().enumerate() {
        let a = arms[row.cluster];
        let j = row.period;
        let out = &mut design[r * p..(r + 1) * p];
        out[beta_index(periods, a, j)] = 1.0;
        if spec.adjustment != Adjustment::None {
            let mut c = slope_offset[a][j];
            for t in 0..terms.len() {
                if keep[j][t] {
                    out[c] = row.z[t] - centers[j][t];
                    c += 1;
                }
            }
        }
    }
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.v).collect();
    let (coef, qr) = weighted_least_squares(&design, &y, &v, p).map_err(|e| {
        Error::SingularOracleFit(format!("global design, condition {:e}", e.condition))
    })?;

    // sandwich B·M·B over clusters
    let mut scores = vec![vec![0.0; p]; n];
    for (r, row) in rows.iter().enumerate() {
        let a_row = &design[r * p..(r + 1) * p];
        let e = row.y - a_row.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>();
        for (s, x) in scores[row.cluster].iter_mut().zip(a_row) {
            *s += row.v * e * x;
        }
    }
    let bread = qr.gram_inverse();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for u in &scores {
        let u = nalgebra::DVector::from_column_slice(u);
        meat += &u * u.transpose();
    }
    let full = &bread * meat * &bread;
    let beta_cov = full.view((0, 0), (n_beta, n_beta)).into_owned();

    let gamma = match spec.adjustment {
        Adjustment::None => vec![Vec::new(); n_beta],
        Adjustment::FullyInteracted => (0..=periods)
            .flat_map(|a| (0..periods).map(move |j| (a, j)))
            .map(|(a, j)| coef[slope_offset[a][j]..slope_offset[a][j] + p_of(j)].to_vec())
            .collect(),
        Adjustment::Ancova => (0..periods)
            .map(|j| coef[slope_offset[0][j]..slope_offset[0][j] + p_of(j)].to_vec())
            .collect(),
    };
    Ok(OracleFit {
        estimate: DwateEstimate {
            spec: spec.clone(),
            scheme: w.scheme(),
            periods,
            beta: coef[..n_beta].to_vec(),
            gamma,
            residuals: Vec::new(),
            dropped,
        },
        beta_cov,
    })
}
