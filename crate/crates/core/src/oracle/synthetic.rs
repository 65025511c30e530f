use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{AdoptionTime, Frame, FrameCell, FrameCluster};
use crate::design::{stream_rng, DesignSpec};
use crate::error::Result;
use crate::oracle::PotentialOutcomeTable;

/// Shape of a randomly generated finite population.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomTableConfig {
    /// Clusters per arm, `J + 1` entries with the never-treated arm last.
    pub arm_sizes: Vec<usize>,
    /// Inclusive range of cluster-period sizes.
    pub sizes: (usize, usize),
    pub px: usize,
    pub pc: usize,
    /// Attach a positive custom weight column.
    pub weights: bool,
    /// Scale of arm-specific idiosyncratic effects.
    pub heterogeneity: f64,
}

impl RandomTableConfig {
    pub fn new(arm_sizes: Vec<usize>) -> Self {
        Self {
            arm_sizes,
            sizes: (2, 6),
            px: 1,
            pc: 1,
            weights: true,
            heterogeneity: 1.0,
        }
    }
}

/// Heterogeneous potential outcomes with informative cluster sizes.
pub fn random_table(cfg: &RandomTableConfig, seed: u64) -> Result<PotentialOutcomeTable> {
    let periods = cfg.arm_sizes.len().saturating_sub(1);
    let design = DesignSpec::new(periods, cfg.arm_sizes.clone())?;
    let n = design.n_clusters();
    let mut rng = stream_rng(seed, 0);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let (lo, hi) = (cfg.sizes.0.max(1), cfg.sizes.1.max(cfg.sizes.0.max(1)));

    let mut clusters = Vec::with_capacity(n);
    let mut cluster_effect = Vec::with_capacity(n);
    for i in 0..n {
        let shift = std.sample(&mut rng);
        cluster_effect.push(shift);
        let cells = (0..periods)
            .map(|_| {
                let size = rng.random_range(lo..=hi);
                FrameCell {
                    size,
                    x: (0..size * cfg.px)
                        .map(|_| shift + std.sample(&mut rng))
                        .collect(),
                    weights: cfg
                        .weights
                        .then(|| (0..size).map(|_| rng.random_range(0.5..2.0)).collect()),
                    c: (0..cfg.pc)
                        .map(|_| std.sample(&mut rng) + 0.5 * shift)
                        .collect(),
                }
            })
            .collect();
        clusters.push(FrameCluster {
            id: format!("c{i}"),
            cells,
        });
    }
    let frame = Arc::new(Frame {
        periods,
        period_labels: (1..=periods as i64).collect(),
        x_names: (0..cfg.px).map(|k| format!("x_{k}")).collect(),
        c_names: (0..cfg.pc).map(|k| format!("c_{k}")).collect(),
        clusters,
    });

    // arm-specific cluster effects and individual noise, drawn up front
    let arm_effect: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..=periods)
                .map(|_| cfg.heterogeneity * std.sample(&mut rng))
                .collect()
        })
        .collect();
    let noise: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
        .map(|i| {
            (0..=periods)
                .map(|_| {
                    (0..periods)
                        .map(|j| {
                            (0..frame.cell(i, j).size)
                                .map(|_| std.sample(&mut rng))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let f = Arc::clone(&frame);
    PotentialOutcomeTable::from_fn(frame, design, move |i, a, j, k| {
        let arm = a.arm(periods);
        let cell = f.cell(i, j);
        let treated = match a {
            AdoptionTime::Period(s) if s <= j + 1 => 1.0 + 0.3 * (j + 1 - s) as f64,
            _ => 0.0,
        };
        let x: f64 = (0..cfg_px(cell))
            .map(|c| cell.x[k * cfg_px(cell) + c])
            .sum();
        let c: f64 = cell.c.iter().sum();
        cluster_effect[i]
            + 0.2 * j as f64
            + treated * (1.0 + 0.1 * cell.size as f64)
            + 0.3 * cell.size as f64
            + arm_effect[i][arm]
            + (0.8 + 0.2 * arm as f64) * x
            + 0.5 * c
            + noise[i][arm][j][k]
    })
}

fn cfg_px(cell: &FrameCell) -> usize {
    if cell.size == 0 {
        0
    } else {
        cell.x.len() / cell.size
    }
}
