#![allow(dead_code)]

use srcre_core::design::{reveal_outcomes, sample_assignment};
use srcre_core::oracle::{random_table, RandomTableConfig};
use srcre_core::{Dataset, DesignSpec};

/// Arm sizes splitting `n` clusters evenly over `periods + 1` arms.
pub fn even_arms(n: usize, periods: usize) -> Vec<usize> {
    DesignSpec::from_fractions(n, periods, &vec![1.0 / (periods + 1) as f64; periods + 1])
        .unwrap()
        .arm_sizes()
        .to_vec()
}

/// Observed data from a random heterogeneous table with `px` individual and
/// `pc` cluster covariates and a custom weight column.
pub fn random_dataset(seed: u64, n: usize, periods: usize, px: usize, pc: usize) -> Dataset {
    let mut cfg = RandomTableConfig::new(even_arms(n, periods));
    cfg.px = px;
    cfg.pc = pc;
    cfg.sizes = (1, 7);
    let po = random_table(&cfg, seed).unwrap();
    let asg = sample_assignment(po.design(), seed ^ 0x5eed);
    reveal_outcomes(&po, &asg).unwrap()
}

/// `max|x − y| / max(|x|, |y|)` over paired entries.
pub fn rel_gap(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let scale = x.iter().chain(y).fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = x
        .iter()
        .zip(y)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
