use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Treatment adoption time: a rollout period `1..=J` or never.
///
/// The derived ordering puts every period before `Never`, which is the
/// block order used by every coefficient vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdoptionTime {
    Period(usize),
    Never,
}

impl AdoptionTime {
    /// All `J + 1` adoption times in block order.
    pub fn all(periods: usize) -> Vec<AdoptionTime> {
        (1..=periods)
            .map(AdoptionTime::Period)
            .chain(std::iter::once(AdoptionTime::Never))
            .collect()
    }

    /// Zero-based arm index (`Never` maps to `J`).
    pub fn arm(self, periods: usize) -> usize {
        match self {
            AdoptionTime::Period(j) => j - 1,
            AdoptionTime::Never => periods,
        }
    }

    pub fn from_arm(arm: usize, periods: usize) -> AdoptionTime {
        if arm >= periods {
            AdoptionTime::Never
        } else {
            AdoptionTime::Period(arm + 1)
        }
    }

    pub fn is_valid(self, periods: usize) -> bool {
        match self {
            AdoptionTime::Period(j) => (1..=periods).contains(&j),
            AdoptionTime::Never => true,
        }
    }
}

impl fmt::Display for AdoptionTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdoptionTime::Period(j) => write!(f, "{j}"),
            AdoptionTime::Never => f.write_str("inf"),
        }
    }
}

impl FromStr for AdoptionTime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "never" | "∞" => Ok(AdoptionTime::Never),
            _ => t
                .parse::<usize>()
                .ok()
                .filter(|&j| j >= 1)
                .map(AdoptionTime::Period)
                .ok_or_else(|| format!("invalid adoption time `{t}`")),
        }
    }
}

impl Serialize for AdoptionTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AdoptionTime::Period(j) => s.serialize_u64(*j as u64),
            AdoptionTime::Never => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for AdoptionTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(j) if j >= 1 => Ok(AdoptionTime::Period(j as usize)),
            Raw::Int(j) => Err(serde::de::Error::custom(format!(
                "invalid adoption time `{j}`"
            ))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Everything about a trial except the outcomes: cluster-period sizes,
/// covariates and optional per-record weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub periods: usize,
    /// Original period labels; `period_labels[j-1]` is period `j`.
    pub period_labels: Vec<i64>,
    pub x_names: Vec<String>,
    pub c_names: Vec<String>,
    pub clusters: Vec<FrameCluster>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCluster {
    pub id: String,
    pub cells: Vec<FrameCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCell {
    pub size: usize,
    /// Row-major `size × p_x` individual covariates.
    pub x: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    /// Cluster-period covariates, length `p_c`.
    pub c: Vec<f64>,
}

impl Frame {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn px(&self) -> usize {
        self.x_names.len()
    }

    pub fn pc(&self) -> usize {
        self.c_names.len()
    }

    pub fn cell(&self, cluster: usize, period: usize) -> &FrameCell {
        &self.clusters[cluster].cells[period]
    }

    pub fn has_weight_column(&self) -> bool {
        self.clusters
            .iter()
            .all(|c| c.cells.iter().all(|cell| cell.weights.is_some()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(Error::ShapeMismatch(
                "a trial needs at least one period".into(),
            ));
        }
        if self.period_labels.len() != self.periods {
            return Err(Error::ShapeMismatch(format!(
                "{} period labels for {} periods",
                self.period_labels.len(),
                self.periods
            )));
        }
        let (px, pc) = (self.px(), self.pc());
        for cl in &self.clusters {
            if cl.cells.len() != self.periods {
                return Err(Error::ShapeMismatch(format!(
                    "cluster `{}` has {} periods, expected {}",
                    cl.id,
                    cl.cells.len(),
                    self.periods
                )));
            }
            for (j, cell) in cl.cells.iter().enumerate() {
                if cell.size == 0 {
                    return Err(Error::EmptyClusterPeriod {
                        cluster: cl.id.clone(),
                        period: j + 1,
                    });
                }
                if cell.x.len() != cell.size * px || cell.c.len() != pc {
                    return Err(Error::ShapeMismatch(format!(
                        "covariate shape in cluster `{}` period {}",
                        cl.id,
                        j + 1
                    )));
                }
                if let Some(w) = &cell.weights {
                    if w.len() != cell.size {
                        return Err(Error::ShapeMismatch(format!(
                            "weight column length in cluster `{}` period {}",
                            cl.id,
                            j + 1
                        )));
                    }
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteValue {
                            record: 0,
                            column: "weight".into(),
                        });
                    }
                    if w.iter().any(|&v| v < 0.0) {
                        return Err(Error::NegativeWeight {
                            cluster: cl.id.clone(),
                            period: j + 1,
                        });
                    }
                }
                if cell.x.iter().chain(&cell.c).any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue {
                        record: 0,
                        column: "covariate".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Observed trial data: a frame plus each cluster's adoption time and
/// observed outcomes. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    frame: Arc<Frame>,
    adoption: Vec<AdoptionTime>,
    /// `outcomes[i][j][k]`
    outcomes: Vec<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(
        frame: Arc<Frame>,
        adoption: Vec<AdoptionTime>,
        outcomes: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        frame.validate()?;
        if adoption.len() != frame.n_clusters() || outcomes.len() != frame.n_clusters() {
            return Err(Error::ShapeMismatch(format!(
                "{} clusters in frame, {} adoption times, {} outcome blocks",
                frame.n_clusters(),
                adoption.len(),
                outcomes.len()
            )));
        }
        for (i, (a, ys)) in adoption.iter().zip(&outcomes).enumerate() {
            if !a.is_valid(frame.periods) {
                return Err(Error::InvalidValue {
                    record: i,
                    column: "adoption_time".into(),
                    value: a.to_string(),
                });
            }
            if ys.len() != frame.periods {
                return Err(Error::ShapeMismatch(format!("outcomes of cluster {i}")));
            }
            for (j, y) in ys.iter().enumerate() {
                if y.len() != frame.cell(i, j).size {
                    return Err(Error::ShapeMismatch(format!(
                        "outcomes of cluster {i} period {}",
                        j + 1
                    )));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue {
                        record: 0,
                        column: "outcome".into(),
                    });
                }
            }
        }
        Ok(Self {
            frame,
            adoption,
            outcomes,
        })
    }

    /// Build a dataset from per-cluster inputs (mostly for tests and
    /// generated data).
    pub fn from_clusters(
        periods: usize,
        x_names: Vec<String>,
        c_names: Vec<String>,
        clusters: Vec<ClusterInput>,
    ) -> Result<Self> {
        let mut adoption = Vec::with_capacity(clusters.len());
        let mut outcomes = Vec::with_capacity(clusters.len());
        let mut frame_clusters = Vec::with_capacity(clusters.len());
        for cl in clusters {
            adoption.push(cl.adoption);
            let mut ys = Vec::with_capacity(cl.cells.len());
            let mut cells = Vec::with_capacity(cl.cells.len());
            for cell in cl.cells {
                cells.push(FrameCell {
                    size: cell.outcomes.len(),
                    x: cell.x,
                    weights: cell.weights,
                    c: cell.c,
                });
                ys.push(cell.outcomes);
            }
            outcomes.push(ys);
            frame_clusters.push(FrameCluster { id: cl.id, cells });
        }
        let frame = Frame {
            periods,
            period_labels: (1..=periods as i64).collect(),
            x_names,
            c_names,
            clusters: frame_clusters,
        };
        Dataset::new(Arc::new(frame), adoption, outcomes)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn frame_arc(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn periods(&self) -> usize {
        self.frame.periods
    }

    pub fn n_clusters(&self) -> usize {
        self.frame.n_clusters()
    }

    pub fn adoption(&self, cluster: usize) -> AdoptionTime {
        self.adoption[cluster]
    }

    pub fn adoption_times(&self) -> &[AdoptionTime] {
        &self.adoption
    }

    /// Arm index of each cluster.
    pub fn arms(&self) -> Vec<usize> {
        let j = self.periods();
        self.adoption.iter().map(|a| a.arm(j)).collect()
    }

    /// `I(a)` for every arm in block order.
    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.periods() + 1];
        for a in self.arms() {
            counts[a] += 1;
        }
        counts
    }

    pub fn outcomes(&self, cluster: usize, period: usize) -> &[f64] {
        &self.outcomes[cluster][period]
    }

    /// A copy with every outcome transformed.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Dataset {
        let outcomes = self
            .outcomes
            .iter()
            .map(|c| {
                c.iter()
                    .map(|y| y.iter().map(|&v| f(v)).collect())
                    .collect()
            })
            .collect();
        Dataset {
            frame: Arc::clone(&self.frame),
            adoption: self.adoption.clone(),
            outcomes,
        }
    }
}

/// Per-cluster input used by [`Dataset::from_clusters`].
#[derive(Debug, Clone)]
pub struct ClusterInput {
    pub id: String,
    pub adoption: AdoptionTime,
    pub cells: Vec<CellInput>,
}

#[derive(Debug, Clone, Default)]
pub struct CellInput {
    pub outcomes: Vec<f64>,
    pub x: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub c: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adoption_order_puts_never_last() {
        let all = AdoptionTime::all(3);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(all.len(), 4);
        assert!(AdoptionTime::Period(3) < AdoptionTime::Never);
        assert_eq!(AdoptionTime::Never.arm(3), 3);
        assert_eq!(AdoptionTime::from_arm(1, 3), AdoptionTime::Period(2));
    }

    #[test]
    fn adoption_parses_inf_and_never() {
        assert_eq!("inf".parse::<AdoptionTime>().unwrap(), AdoptionTime::Never);
        assert_eq!(
            "Never".parse::<AdoptionTime>().unwrap(),
            AdoptionTime::Never
        );
        assert_eq!(
            "2".parse::<AdoptionTime>().unwrap(),
            AdoptionTime::Period(2)
        );
        assert!("0".parse::<AdoptionTime>().is_err());
        assert!("x".parse::<AdoptionTime>().is_err());
    }

    #[test]
    fn adoption_serde_uses_inf_string() {
        let v = serde_json::to_string(&vec![AdoptionTime::Period(1), AdoptionTime::Never]).unwrap();
        assert_eq!(v, r#"[1,"inf"]"#);
        let back: Vec<AdoptionTime> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![AdoptionTime::Period(1), AdoptionTime::Never]);
    }
}
