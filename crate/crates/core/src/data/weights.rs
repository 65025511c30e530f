use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Covariate, Dataset, Frame};
use crate::error::{Error, Result};
use crate::numeric::sum;

/// Individual weight `w_ijk` used to define the target population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_ijk = 1`: every individual counts equally.
    UniformIndividual,
    /// `w_ijk = 1/N_ij`: every cluster-period counts equally.
    InverseClusterPeriodSize,
    /// Per-record `weight` column.
    CustomColumn,
}

impl WeightScheme {
    pub fn label(self) -> &'static str {
        match self {
            WeightScheme::UniformIndividual => "uniform_individual",
            WeightScheme::InverseClusterPeriodSize => "inverse_cluster_period_size",
            WeightScheme::CustomColumn => "custom_column",
        }
    }
}

/// The normalized weight system of a frame. Depends only on sizes,
/// covariates and the scheme, never on outcomes, so one instance can be
/// shared across every assignment of the same frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    scheme: WeightScheme,
    frame: Arc<Frame>,
    /// `π_ijk`, indexed `[i][j][k]`.
    pi: Vec<Vec<Vec<f64>>>,
    /// `π_ij·`
    pi_cell: Vec<Vec<f64>>,
    /// `w_ij·`
    cell_weight: Vec<Vec<f64>>,
    /// `w_·j·`
    period_weight: Vec<f64>,
    /// `N_j`
    period_size: Vec<usize>,
    /// `X̄_ij·`, indexed `[i][j][k]`.
    xbar: Vec<Vec<Vec<f64>>>,
}

impl WeightSystem {
    pub fn new(frame: Arc<Frame>, scheme: WeightScheme) -> Result<Self> {
        let (n, periods, px) = (frame.n_clusters(), frame.periods, frame.px());
        if scheme == WeightScheme::CustomColumn && !frame.has_weight_column() {
            return Err(Error::MissingWeightColumn);
        }
        let raw: Vec<Vec<Vec<f64>>> = frame
            .clusters
            .iter()
            .map(|cl| {
                cl.cells
                    .iter()
                    .map(|cell| match scheme {
                        WeightScheme::UniformIndividual => vec![1.0; cell.size],
                        WeightScheme::InverseClusterPeriodSize => {
                            vec![1.0 / cell.size as f64; cell.size]
                        }
                        WeightScheme::CustomColumn => cell.weights.clone().unwrap_or_default(),
                    })
                    .collect()
            })
            .collect();
        for (i, cl) in raw.iter().enumerate() {
            for (j, w) in cl.iter().enumerate() {
                if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::NegativeWeight {
                        cluster: frame.clusters[i].id.clone(),
                        period: j + 1,
                    });
                }
            }
        }
        let cell_weight: Vec<Vec<f64>> = raw
            .iter()
            .map(|cl| cl.iter().map(|w| sum(w.iter().copied())).collect())
            .collect();
        let mut period_weight = Vec::with_capacity(periods);
        let mut period_size = Vec::with_capacity(periods);
        for j in 0..periods {
            let total = sum((0..n).flat_map(|i| raw[i][j].iter().copied()));
            if !(total > 0.0) {
                return Err(Error::ZeroTotalWeight(j + 1));
            }
            period_weight.push(total);
            period_size.push((0..n).map(|i| frame.cell(i, j).size).sum());
        }
        let pi: Vec<Vec<Vec<f64>>> = raw
            .iter()
            .map(|cl| {
                cl.iter()
                    .enumerate()
                    .map(|(j, w)| w.iter().map(|v| v / period_weight[j]).collect())
                    .collect()
            })
            .collect();
        let pi_cell: Vec<Vec<f64>> = pi
            .iter()
            .map(|cl| {
                cl.iter()
                    .map(|p: &Vec<f64>| sum(p.iter().copied()))
                    .collect()
            })
            .collect();
        let xbar = (0..n)
            .map(|i| {
                (0..periods)
                    .map(|j| {
                        let cell = frame.cell(i, j);
                        (0..px)
                            .map(|k| {
                                let xs = (0..cell.size).map(|r| cell.x[r * px + k]);
                                weighted_mean(&pi[i][j], pi_cell[i][j], xs)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            scheme,
            frame,
            pi,
            pi_cell,
            cell_weight,
            period_weight,
            period_size,
            xbar,
        })
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn n_clusters(&self) -> usize {
        self.pi.len()
    }

    pub fn periods(&self) -> usize {
        self.period_weight.len()
    }

    pub fn pi(&self, cluster: usize, period: usize) -> &[f64] {
        &self.pi[cluster][period]
    }

    pub fn pi_cell(&self, cluster: usize, period: usize) -> f64 {
        self.pi_cell[cluster][period]
    }

    pub fn cell_weight(&self, cluster: usize, period: usize) -> f64 {
        self.cell_weight[cluster][period]
    }

    pub fn period_weight(&self, period: usize) -> f64 {
        self.period_weight[period]
    }

    pub fn period_size(&self, period: usize) -> usize {
        self.period_size[period]
    }

    pub fn xbar(&self, cluster: usize, period: usize) -> &[f64] {
        &self.xbar[cluster][period]
    }

    /// `π`-weighted mean of cell values: `Σ_k π_ijk v_k / π_ij·`.
    pub fn cell_mean(&self, cluster: usize, period: usize, values: &[f64]) -> f64 {
        weighted_mean(
            &self.pi[cluster][period],
            self.pi_cell[cluster][period],
            values.iter().copied(),
        )
    }

    /// Value of a cluster-level term for cell `(i, j)`.
    ///
    /// Individual terms evaluate to their cell mean `X̄_ij·`.
    pub fn cell_term(&self, term: Covariate, cluster: usize, period: usize) -> f64 {
        let pi = self.pi_cell[cluster][period];
        match term {
            Covariate::X(k) | Covariate::XBar(k) => self.xbar[cluster][period][k],
            Covariate::C(k) => self.frame.cell(cluster, period).c[k],
            Covariate::Pi => pi,
            Covariate::PiC(k) => pi * self.frame.cell(cluster, period).c[k],
            Covariate::XTilde(k) => self.n_clusters() as f64 * pi * self.xbar[cluster][period][k],
        }
    }

    /// Value of a term for individual `k` of cell `(i, j)`.
    pub fn individual_term(&self, term: Covariate, cluster: usize, period: usize, k: usize) -> f64 {
        match term {
            Covariate::X(c) => {
                let px = self.frame.px();
                self.frame.cell(cluster, period).x[k * px + c]
            }
            _ => self.cell_term(term, cluster, period),
        }
    }

    /// Full-sample centering constant of a term in period `j`.
    ///
    /// `weighted` uses the `π` system (`Σ_i Σ_k π_ijk v_ijk`); otherwise the
    /// plain mean over clusters `I⁻¹ Σ_i v_ij`.
    pub fn center(&self, term: Covariate, period: usize, weighted: bool) -> f64 {
        let n = self.n_clusters();
        if weighted {
            sum((0..n).map(|i| self.pi_cell[i][period] * self.cell_term(term, i, period)))
        } else {
            sum((0..n).map(|i| self.cell_term(term, i, period))) / n as f64
        }
    }
}

/// `Σ π v / π_tot`; falls back to the plain mean when the cell carries no weight.
fn weighted_mean(pi: &[f64], total: f64, values: impl Iterator<Item = f64>) -> f64 {
    if total > 0.0 {
        sum(pi.iter().zip(values).map(|(p, v)| p * v)) / total
    } else {
        let vs: Vec<f64> = values.collect();
        sum(vs.iter().copied()) / vs.len() as f64
    }
}

/// Weight system plus the outcome aggregates of one observed dataset.
/// The aggregates are cached, so rebuild after changing outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedWeights {
    system: Arc<WeightSystem>,
    /// `Ȳ_ij·`
    ybar: Vec<Vec<f64>>,
    /// `Ỹ_ij· = I·π_ij·Ȳ_ij·`
    ytilde: Vec<Vec<f64>>,
}

impl DerivedWeights {
    pub fn new(d: &Dataset, scheme: WeightScheme) -> Result<Self> {
        let system = WeightSystem::new(Arc::clone(d.frame_arc()), scheme)?;
        Self::with_system(d, Arc::new(system))
    }

    /// Reuse a weight system built for the same frame.
    pub fn with_system(d: &Dataset, system: Arc<WeightSystem>) -> Result<Self> {
        if system.n_clusters() != d.n_clusters() || system.periods() != d.periods() {
            return Err(Error::ShapeMismatch(
                "weight system was built for a different frame".into(),
            ));
        }
        let n = d.n_clusters() as f64;
        let ybar: Vec<Vec<f64>> = (0..d.n_clusters())
            .map(|i| {
                (0..d.periods())
                    .map(|j| system.cell_mean(i, j, d.outcomes(i, j)))
                    .collect()
            })
            .collect();
        let ytilde = ybar
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, y)| n * system.pi_cell(i, j) * y)
                    .collect()
            })
            .collect();
        Ok(Self {
            system,
            ybar,
            ytilde,
        })
    }

    pub fn system(&self) -> &WeightSystem {
        &self.system
    }

    pub fn system_arc(&self) -> &Arc<WeightSystem> {
        &self.system
    }

    pub fn scheme(&self) -> WeightScheme {
        self.system.scheme()
    }

    pub fn ybar(&self, cluster: usize, period: usize) -> f64 {
        self.ybar[cluster][period]
    }

    pub fn ytilde(&self, cluster: usize, period: usize) -> f64 {
        self.ytilde[cluster][period]
    }

    /// `Ȳ_·j· = Σ_i π_ij·Ȳ_ij·`
    pub fn period_ybar(&self, period: usize) -> f64 {
        sum((0..self.ybar.len()).map(|i| self.system.pi_cell(i, period) * self.ybar[i][period]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AdoptionTime, CellInput, ClusterInput};

    fn sizes_dataset(sizes: &[[usize; 2]], weights: Option<f64>) -> Dataset {
        let clusters = sizes
            .iter()
            .enumerate()
            .map(|(i, s)| ClusterInput {
                id: format!("c{i}"),
                adoption: if i == 0 {
                    AdoptionTime::Period(1)
                } else {
                    AdoptionTime::Never
                },
                cells: s
                    .iter()
                    .map(|&n| CellInput {
                        outcomes: (0..n).map(|k| k as f64 + i as f64).collect(),
                        x: (0..n).map(|k| 0.5 * k as f64).collect(),
                        weights: weights.map(|w| vec![w; n]),
                        c: vec![],
                    })
                    .collect(),
            })
            .collect();
        Dataset::from_clusters(2, vec!["x_a".into()], vec![], clusters).unwrap()
    }

    #[test]
    fn uniform_weights_follow_cluster_sizes() {
        let d = sizes_dataset(&[[2, 1], [3, 1]], None);
        let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
        let s = w.system();
        assert_eq!(s.period_weight(0), 5.0);
        assert!((s.pi_cell(0, 0) - 0.4).abs() < 1e-15);
        assert!((s.pi_cell(1, 0) - 0.6).abs() < 1e-15);
        assert_eq!(s.period_size(0), 5);
    }

    #[test]
    fn inverse_size_weights_are_equal_across_clusters() {
        let d = sizes_dataset(&[[2, 7], [3, 1]], None);
        let w = DerivedWeights::new(&d, WeightScheme::InverseClusterPeriodSize).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((w.system().pi_cell(i, j) - 0.5).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn all_zero_custom_weights_are_rejected() {
        let d = sizes_dataset(&[[2, 1], [3, 1]], Some(0.0));
        assert!(matches!(
            DerivedWeights::new(&d, WeightScheme::CustomColumn),
            Err(Error::ZeroTotalWeight(1))
        ));
        let no_col = sizes_dataset(&[[2, 1], [3, 1]], None);
        assert!(matches!(
            DerivedWeights::new(&no_col, WeightScheme::CustomColumn),
            Err(Error::MissingWeightColumn)
        ));
    }

    #[test]
    fn scaled_totals_match_definition() {
        let d = sizes_dataset(&[[2, 4], [3, 1]], None);
        let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let ys = d.outcomes(i, j);
                let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
                assert!((w.ybar(i, j) - ybar).abs() < 1e-14);
                let expected = 2.0 * w.system().pi_cell(i, j) * ybar;
                assert!((w.ytilde(i, j) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn weighted_center_equals_individual_average() {
        let d = sizes_dataset(&[[2, 4], [3, 1]], None);
        let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
        // period 1 x values: 0, .5 | 0, .5, 1
        let c = w.system().center(Covariate::X(0), 0, true);
        assert!((c - 2.0 / 5.0).abs() < 1e-15);
        assert_eq!(c, w.system().center(Covariate::XBar(0), 0, true));
    }
}
