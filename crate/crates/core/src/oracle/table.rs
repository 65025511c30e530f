use std::sync::Arc;

use crate::data::{AdoptionTime, Frame, WeightScheme, WeightSystem};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::numeric::sum;

/// Every potential outcome `Y_ijk(a)` of a finite population, together with
/// its frame and the randomization design.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable {
    frame: Arc<Frame>,
    design: DesignSpec,
    /// `y[i][arm][j][k]`
    y: Vec<Vec<Vec<Vec<f64>>>>,
}

impl PotentialOutcomeTable {
    pub fn new(frame: Arc<Frame>, design: DesignSpec, y: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        frame.validate()?;
        if design.periods() != frame.periods || design.n_clusters() != frame.n_clusters() {
            return Err(Error::ShapeMismatch(format!(
                "design has {} clusters over {} periods, frame {} over {}",
                design.n_clusters(),
                design.periods(),
                frame.n_clusters(),
                frame.periods
            )));
        }
        if y.len() != frame.n_clusters() {
            return Err(Error::ShapeMismatch(
                "potential outcomes per cluster".into(),
            ));
        }
        for (i, arms) in y.iter().enumerate() {
            if arms.len() != frame.periods + 1 {
                return Err(Error::ShapeMismatch(format!("arms of cluster {i}")));
            }
            for per in arms {
                if per.len() != frame.periods {
                    return Err(Error::ShapeMismatch(format!("periods of cluster {i}")));
                }
                for (j, ys) in per.iter().enumerate() {
                    if ys.len() != frame.cell(i, j).size {
                        return Err(Error::ShapeMismatch(format!(
                            "cell ({i}, {}) outcome count",
                            j + 1
                        )));
                    }
                    if ys.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteValue {
                            record: 0,
                            column: "potential outcome".into(),
                        });
                    }
                }
            }
        }
        Ok(Self { frame, design, y })
    }

    /// Build a table from `f(i, a, j, k)` with zero-based `i`, `j`, `k`.
    pub fn from_fn(
        frame: Arc<Frame>,
        design: DesignSpec,
        f: impl Fn(usize, AdoptionTime, usize, usize) -> f64,
    ) -> Result<Self> {
        let periods = frame.periods;
        let y = (0..frame.n_clusters())
            .map(|i| {
                AdoptionTime::all(periods)
                    .into_iter()
                    .map(|a| {
                        (0..periods)
                            .map(|j| (0..frame.cell(i, j).size).map(|k| f(i, a, j, k)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(frame, design, y)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn frame_arc(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn n_clusters(&self) -> usize {
        self.y.len()
    }

    pub fn periods(&self) -> usize {
        self.frame.periods
    }

    /// Outcomes of cluster `i` under arm `a`, indexed `[j][k]`.
    pub fn arm_outcomes(&self, i: usize, a: AdoptionTime) -> &[Vec<f64>] {
        &self.y[i][a.arm(self.periods())]
    }

    pub fn outcomes(&self, i: usize, a: AdoptionTime, j: usize) -> &[f64] {
        &self.y[i][a.arm(self.periods())][j]
    }

    /// Same population with a different randomization design.
    pub fn with_design(&self, design: DesignSpec) -> Result<Self> {
        Self::new(Arc::clone(&self.frame), design, self.y.clone())
    }

    /// Every outcome transformed by `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let y = self
            .y
            .iter()
            .map(|arms| {
                arms.iter()
                    .map(|per| {
                        per.iter()
                            .map(|ys| ys.iter().map(|&v| f(v)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            frame: Arc::clone(&self.frame),
            design: self.design.clone(),
            y,
        }
    }

    pub fn weight_system(&self, scheme: WeightScheme) -> Result<WeightSystem> {
        WeightSystem::new(Arc::clone(&self.frame), scheme)
    }

    /// Cluster-period aggregates of every arm under a weight system.
    pub fn aggregates(&self, sys: &WeightSystem) -> Aggregates {
        let (n, periods) = (self.n_clusters(), self.periods());
        let ybar: Vec<Vec<Vec<f64>>> = (0..=periods)
            .map(|arm| {
                (0..n)
                    .map(|i| {
                        (0..periods)
                            .map(|j| sys.cell_mean(i, j, &self.y[i][arm][j]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let period_mean = (0..=periods)
            .map(|arm| {
                (0..periods)
                    .map(|j| sum((0..n).map(|i| sys.pi_cell(i, j) * ybar[arm][i][j])))
                    .collect()
            })
            .collect();
        Aggregates {
            n_clusters: n,
            periods,
            ybar,
            period_mean,
            pi_cell: (0..n)
                .map(|i| (0..periods).map(|j| sys.pi_cell(i, j)).collect())
                .collect(),
        }
    }
}

/// Per-arm cluster-period aggregates of a potential-outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    n_clusters: usize,
    periods: usize,
    /// `Ȳ_ij·(a)`, indexed `[arm][i][j]`.
    ybar: Vec<Vec<Vec<f64>>>,
    /// `Ȳ_·j·(a)`, indexed `[arm][j]`.
    period_mean: Vec<Vec<f64>>,
    pi_cell: Vec<Vec<f64>>,
}

impl Aggregates {
    pub fn ybar(&self, arm: usize, i: usize, j: usize) -> f64 {
        self.ybar[arm][i][j]
    }

    pub fn period_mean(&self, arm: usize, j: usize) -> f64 {
        self.period_mean[arm][j]
    }

    /// `Ỹ_ij·(a) = I·π_ij·Ȳ_ij·(a)`
    pub fn ytilde(&self, arm: usize, i: usize, j: usize) -> f64 {
        self.n_clusters as f64 * self.pi_cell[i][j] * self.ybar[arm][i][j]
    }

    /// `ε̃_ij·(a) = Ỹ_ij·(a) − I·π_ij·Ȳ_·j·(a)`
    pub fn eps_tilde(&self, arm: usize, i: usize, j: usize) -> f64 {
        self.n_clusters as f64
            * self.pi_cell[i][j]
            * (self.ybar[arm][i][j] - self.period_mean[arm][j])
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn periods(&self) -> usize {
        self.periods
    }
}
