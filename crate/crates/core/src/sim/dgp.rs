use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{AdoptionTime, Frame, FrameCell, FrameCluster, WeightSystem};
use crate::design::DesignSpec;
use crate::error::Result;
use crate::oracle::PotentialOutcomeTable;
use crate::sim::{SimConfig, Study};

/// `|X^c|` below this is redrawn so that `log|X^c|` stays finite.
const LOG_GUARD: f64 = 1e-12;

/// Size law bounds for zero-based period `j`: `size_total/(jI)·(1 ∓ spread)`.
pub fn size_bounds(cfg: &SimConfig, j: usize) -> (f64, f64) {
    let centre = cfg.size_total / ((j + 1) as f64 * cfg.clusters as f64);
    (
        centre * (1.0 - cfg.size_spread),
        centre * (1.0 + cfg.size_spread),
    )
}

/// Draw one finite population for the configured study.
pub fn draw_table(
    cfg: &SimConfig,
    design: &DesignSpec,
    rng: &mut ChaCha8Rng,
) -> Result<PotentialOutcomeTable> {
    let (n, periods) = (cfg.clusters, cfg.periods);
    let nf = n as f64;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut sizes = vec![vec![0usize; periods]; n];
    for j in 0..periods {
        let (lo, hi) = size_bounds(cfg, j);
        for (i, row) in sizes.iter_mut().enumerate() {
            let raw = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            let mult = if i == 0 { cfg.large_cluster } else { 1.0 };
            row[j] = ((raw * mult).round() as usize).max(2);
        }
    }
    // X_ijk ~ ij/I + U(−1, 1) with one-based i, j
    let mut x: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            (0..periods)
                .map(|j| {
                    let shift = ((i + 1) * (j + 1)) as f64 / nf;
                    (0..sizes[i][j])
                        .map(|_| shift + rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect()
        })
        .collect();

    let build_frame = |x: &Vec<Vec<Vec<f64>>>| {
        Arc::new(Frame {
            periods,
            period_labels: (1..=periods as i64).collect(),
            x_names: vec!["x".into()],
            c_names: Vec::new(),
            clusters: (0..n)
                .map(|i| FrameCluster {
                    id: format!("cl{:04}", i + 1),
                    cells: (0..periods)
                        .map(|j| FrameCell {
                            size: sizes[i][j],
                            x: x[i][j].clone(),
                            weights: None,
                            c: Vec::new(),
                        })
                        .collect(),
                })
                .collect(),
        })
    };

    // centre with the realised π system; redraw the measure-zero |X^c| ≈ 0
    let (frame, centers) = loop {
        let frame = build_frame(&x);
        let sys = WeightSystem::new(Arc::clone(&frame), cfg.weight_scheme)?;
        let centers: Vec<f64> = (0..periods)
            .map(|j| sys.center(crate::data::Covariate::X(0), j, true))
            .collect();
        let mut redrawn = false;
        for i in 0..n {
            for j in 0..periods {
                for v in x[i][j].iter_mut() {
                    if (*v - centers[j]).abs() < LOG_GUARD {
                        let shift = ((i + 1) * (j + 1)) as f64 / nf;
                        *v = shift + rng.random_range(-1.0..1.0);
                        redrawn = true;
                    }
                }
            }
        }
        if !redrawn {
            break (frame, centers);
        }
    };

    let period_total: Vec<f64> = (0..periods)
        .map(|j| (0..n).map(|i| sizes[i][j] as f64).sum())
        .collect();
    let zeta_sd = cfg.zeta_variance.sqrt();
    let zeta: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..periods).map(|_| zeta_sd * unit.sample(rng)).collect())
        .collect();
    // independent individual noise for every arm
    let noise: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
        .map(|i| {
            (0..=periods)
                .map(|_| {
                    (0..periods)
                        .map(|j| {
                            (0..sizes[i][j])
                                .map(|_| cfg.noise_sd * unit.sample(rng))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let study = cfg.study;
    let custom = cfg.custom.clone();
    PotentialOutcomeTable::from_fn(frame, design.clone(), |i, a, j, k| {
        let size = sizes[i][j] as f64;
        let scaled = size * nf / period_total[j];
        let xc = x[i][j][k] - centers[j];
        let informative = study == Study::StudyI;
        let mean = match (study, a) {
            (Study::Custom, _) => {
                let effect = match a {
                    AdoptionTime::Period(s) if s <= j + 1 => custom.effects[s - 1],
                    _ => 0.0,
                };
                custom.level * (i + 1) as f64 / nf
                    + custom.size_effect * scaled
                    + effect
                    + custom.slope * xc
            }
            (_, AdoptionTime::Period(1)) => {
                2.0 * scaled + if informative { xc.powi(3) } else { 0.0 }
            }
            (_, AdoptionTime::Period(_)) => {
                if informative {
                    size.sqrt() * nf / period_total[j] * xc.powi(4) + xc.abs().ln()
                } else {
                    size.sqrt() * nf / period_total[j]
                }
            }
            (_, AdoptionTime::Never) => {
                (i + 1) as f64 / nf + if informative { xc * xc } else { 0.0 }
            }
        };
        mean + zeta[i][j] + noise[i][a.arm(periods)][j][k]
    })
}
