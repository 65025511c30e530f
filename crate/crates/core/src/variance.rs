//! Sandwich covariance of the `β̂` block, contrast matrices and Wald
//! intervals.
//!
//! The same code serves the cluster-robust (individual rows) and
//! heteroskedasticity-consistent (cluster-period rows) estimators; only the
//! rows grouped under a cluster differ. Per cluster the score
//! `u_i = Σ_rows v·ê·d` is pushed through the block's bread, and the
//! resulting `β` components are accumulated as outer products. The global
//! bread is block diagonal, so this is exactly the `β` block of `B·M·B`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{AdoptionTime, Dataset, DerivedWeights};
use crate::error::{Error, Result};
use crate::estimators::{build_blocks, pair_order, solve_block, Adjustment, DwateEstimate, Level};
use crate::linalg::min_eigenvalue;
use crate::numeric::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarianceKind {
    /// Cluster-robust, individual rows.
    CR,
    /// Heteroskedasticity-consistent, cluster-period rows.
    HC,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SandwichOptions {
    /// Inflate by `I/(I−1)`.
    pub df_correction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwateCovariance {
    pub periods: usize,
    pub kind: VarianceKind,
    pub adjusted: bool,
    pub df_correction: bool,
    /// Estimated covariance of `β̂`, `J(J+1) × J(J+1)` in block order.
    pub beta_cov: DMatrix<f64>,
}

/// `Q(a, a′)`: `+I_J` in block `a`, `−I_J` in block `a′`.
pub fn contrast_q(periods: usize, a: AdoptionTime, a_prime: AdoptionTime) -> Result<DMatrix<f64>> {
    if a == a_prime || !a.is_valid(periods) || !a_prime.is_valid(periods) {
        return Err(Error::InvalidPair(a, a_prime));
    }
    let mut q = DMatrix::zeros(periods, periods * (periods + 1));
    let (ba, bb) = (a.arm(periods) * periods, a_prime.arm(periods) * periods);
    for j in 0..periods {
        q[(j, ba + j)] = 1.0;
        q[(j, bb + j)] = -1.0;
    }
    Ok(q)
}

/// All `Q(a, a′)` with `a < a′` stacked in pair order.
pub fn stacked_q(periods: usize) -> DMatrix<f64> {
    let pairs = pair_order(periods);
    let mut q = DMatrix::zeros(pairs.len() * periods, periods * (periods + 1));
    for (n, (a, b)) in pairs.into_iter().enumerate() {
        let block = contrast_q(periods, a, b).expect("ordered pair");
        q.view_mut((n * periods, 0), (periods, block.ncols()))
            .copy_from(&block);
    }
    q
}

pub fn sandwich(fit: &DwateEstimate, d: &Dataset, w: &DerivedWeights) -> Result<DwateCovariance> {
    sandwich_with(fit, d, w, SandwichOptions::default())
}

pub fn sandwich_with(
    fit: &DwateEstimate,
    d: &Dataset,
    w: &DerivedWeights,
    opts: SandwichOptions,
) -> Result<DwateCovariance> {
    let periods = d.periods();
    for (a, &have) in d.arm_counts().iter().enumerate() {
        if have < 2 {
            return Err(Error::InsufficientClusters {
                arm: AdoptionTime::from_arm(a, periods),
                have,
            });
        }
    }
    let layout = build_blocks(d, w, &fit.spec)?;
    if layout.blocks.len() != fit.residuals.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.blocks.len(),
            got: fit.residuals.len(),
        });
    }
    let n_beta = periods * (periods + 1);
    let n = d.n_clusters();
    let mut h = vec![vec![0.0; n_beta]; n];
    for (block, resid) in layout.blocks.iter().zip(&fit.residuals) {
        if resid.len() != block.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: block.n_rows(),
                got: resid.len(),
            });
        }
        let (_, bread) = solve_block(block, periods).map_err(|_| Error::SingularBread {
            period: block.period + 1,
        })?;
        // rows of one cluster are contiguous
        let mut r = 0;
        while r < block.n_rows() {
            let i = block.cluster[r];
            let mut u = vec![0.0; block.p];
            while r < block.n_rows() && block.cluster[r] == i {
                let s = block.v[r] * resid[r];
                for (acc, x) in u.iter_mut().zip(block.row(r)) {
                    *acc += s * x;
                }
                r += 1;
            }
            let g = bread.solve(&u);
            for &(col, idx) in &block.beta_cols {
                h[i][idx] += g[col];
            }
        }
    }
    let mut e = DMatrix::<f64>::zeros(n_beta, n_beta);
    for hi in &h {
        let v = DVector::from_column_slice(hi);
        e.ger(1.0, &v, &v, 1.0);
    }
    if opts.df_correction && n > 1 {
        e *= n as f64 / (n as f64 - 1.0);
    }
    e = (&e + e.transpose()) * 0.5;
    Ok(DwateCovariance {
        periods,
        kind: if fit.spec.level == Level::Individual {
            VarianceKind::CR
        } else {
            VarianceKind::HC
        },
        adjusted: fit.spec.adjustment != Adjustment::None,
        df_correction: opts.df_correction,
        beta_cov: e,
    })
}

impl DwateCovariance {
    /// `Q(a,a′)·E·Q(a,a′)ᵀ`, the `J × J` covariance of `τ̂(a, a′)`.
    pub fn pair_cov(&self, a: AdoptionTime, a_prime: AdoptionTime) -> Result<DMatrix<f64>> {
        let q = contrast_q(self.periods, a, a_prime)?;
        Ok(&q * &self.beta_cov * q.transpose())
    }

    /// Marginal standard errors of `τ̂_j(a, a′)`, `j = 1..J`, clamped at 0.
    pub fn pair_se(&self, a: AdoptionTime, a_prime: AdoptionTime) -> Result<Vec<f64>> {
        let c = self.pair_cov(a, a_prime)?;
        Ok((0..self.periods)
            .map(|j| c[(j, j)].max(0.0).sqrt())
            .collect())
    }

    /// Standard error of `τ̂_j(a, a′)` for one-based `j`.
    pub fn se(&self, j: usize, a: AdoptionTime, a_prime: AdoptionTime) -> Result<f64> {
        Ok(self.pair_se(a, a_prime)?[j - 1])
    }

    /// Covariance of the stacked `τ̂` vector.
    pub fn stacked_cov(&self) -> DMatrix<f64> {
        let q = stacked_q(self.periods);
        &q * &self.beta_cov * q.transpose()
    }

    /// Smallest eigenvalue of `E` relative to its trace (0 when `E = 0`).
    pub fn psd_margin(&self) -> f64 {
        let tr = self.beta_cov.trace();
        let m = min_eigenvalue(&self.beta_cov);
        if tr > 0.0 {
            m / tr
        } else {
            m
        }
    }

    /// Serializable `{pair, cov, se}` rows in stacking order.
    pub fn report(&self) -> Vec<PairCovariance> {
        pair_order(self.periods)
            .into_iter()
            .map(|(a, a_prime)| {
                let c = self.pair_cov(a, a_prime).expect("ordered pair");
                PairCovariance {
                    pair: Pair { a, a_prime },
                    cov: (0..self.periods)
                        .flat_map(|r| (0..self.periods).map(move |s| (r, s)))
                        .map(|(r, s)| c[(r, s)])
                        .collect(),
                    se: (0..self.periods)
                        .map(|j| c[(j, j)].max(0.0).sqrt())
                        .collect(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pair {
    pub a: AdoptionTime,
    pub a_prime: AdoptionTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCovariance {
    pub pair: Pair,
    /// Row-major `J × J`.
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
}

/// `sqrt(bᵀ Ĉov b)` for contrast weights in stacking order.
pub fn summary_se(cov: &DwateCovariance, b: &[f64]) -> Result<f64> {
    let j = cov.periods;
    let expected = j * j * (j + 1) / 2;
    if b.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: b.len(),
        });
    }
    let bv = DVector::from_column_slice(b);
    let var = (bv.transpose() * cov.stacked_cov() * &bv)[(0, 0)];
    Ok(var.max(0.0).sqrt())
}

/// Normal-quantile Wald interval `point ± z·se`.
pub fn wald_ci(point: f64, se: f64, level: f64) -> (f64, f64) {
    let z = normal_quantile((1.0 + level) / 2.0);
    (point - z * se, point + z * se)
}
