use std::sync::Arc;

use srcre_core::data::{Frame, FrameCell, FrameCluster};
use srcre_core::estimators::{EstimatorSpec, Level};
use srcre_core::oracle::{
    eps_tilde_series, exhaustive_moments, finite_pop_variance, random_table, run_suite,
    theorem_residuals, true_dwate, ClusterSeries, MomentOptions, PotentialOutcomeTable,
    RandomTableConfig, SuiteConfig,
};
use srcre_core::{AdoptionTime, Covariate, DesignSpec, WeightScheme};
use AdoptionTime::{Never, Period};

fn frame(sizes: &[usize], x: &[Vec<f64>], c: &[f64]) -> Arc<Frame> {
    Arc::new(Frame {
        periods: 1,
        period_labels: vec![1],
        x_names: if x.is_empty() {
            vec![]
        } else {
            vec!["x_a".into()]
        },
        c_names: if c.is_empty() {
            vec![]
        } else {
            vec!["c_a".into()]
        },
        clusters: sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| FrameCluster {
                id: format!("k{i}"),
                cells: vec![FrameCell {
                    size,
                    x: x.get(i).cloned().unwrap_or_default(),
                    weights: None,
                    c: c.get(i).map(|&v| vec![v]).unwrap_or_default(),
                }],
            })
            .collect(),
    })
}

/// Three clusters of sizes 1, 2, 3 in one period; arms 2/1.
fn hand_table() -> PotentialOutcomeTable {
    let f = frame(
        &[1, 2, 3],
        &[vec![1.0], vec![0.0, 2.0], vec![1.0, 3.0, 5.0]],
        &[0.0, 1.0, 5.0],
    );
    let y1 = [vec![3.0], vec![1.0, 5.0], vec![2.0, 2.0, 8.0]];
    let y0 = [vec![1.0], vec![0.0, 2.0], vec![1.0, 1.0, 1.0]];
    let y = (0..3)
        .map(|i| vec![vec![y1[i].clone()], vec![y0[i].clone()]])
        .collect();
    PotentialOutcomeTable::new(f, DesignSpec::new(1, vec![2, 1]).unwrap(), y).unwrap()
}

fn assert_series(s: &ClusterSeries, a: AdoptionTime, expected: &[f64]) {
    for (i, e) in expected.iter().enumerate() {
        let got = s.get(a, i, 0);
        assert!((got - e).abs() < 1e-12, "cluster {i}: {got} vs {e}");
    }
}

#[test]
fn hand_table_residuals() {
    let po = hand_table();
    let sys = po.weight_system(WeightScheme::UniformIndividual).unwrap();
    let eps = eps_tilde_series(&po, &sys);
    assert_series(&eps, Period(1), &[-0.25, -0.5, 0.75]);

    let r = theorem_residuals(&po, &sys, &EstimatorSpec::unadjusted(Level::Individual)).unwrap();
    assert_series(&r, Period(1), &[-0.25, -0.5, 0.75]);
    let r = theorem_residuals(&po, &sys, &EstimatorSpec::unadjusted(Level::Total)).unwrap();
    assert_series(&r, Period(1), &[-2.0, -0.5, 2.5]);

    let r = theorem_residuals(
        &po,
        &sys,
        &EstimatorSpec::adjusted(Level::Individual, vec![Covariate::X(0)]),
    )
    .unwrap();
    assert_series(&r, Period(1), &[11.0 / 32.0, 22.0 / 32.0, -33.0 / 32.0]);

    let r = theorem_residuals(
        &po,
        &sys,
        &EstimatorSpec::adjusted(Level::Average, vec![Covariate::C(0)]),
    )
    .unwrap();
    assert_series(&r, Period(1), &[12.0 / 173.0, -15.0 / 173.0, 3.0 / 173.0]);

    let r = theorem_residuals(
        &po,
        &sys,
        &EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi]),
    )
    .unwrap();
    assert_series(&r, Period(1), &[0.25, -0.5, 0.25]);

    let r = theorem_residuals(&po, &sys, &EstimatorSpec::ancova(vec![Covariate::X(0)])).unwrap();
    assert_series(&r, Period(1), &[1.0 / 6.0, 1.0 / 3.0, -0.5]);
    assert_series(&r, Never, &[5.0 / 12.0, 5.0 / 6.0, -1.25]);
}

#[test]
fn two_cluster_enumeration() {
    let f = frame(&[1, 1], &[], &[]);
    let y = vec![
        vec![vec![vec![2.0]], vec![vec![0.0]]],
        vec![vec![vec![4.0]], vec![vec![2.0]]],
    ];
    let po = PotentialOutcomeTable::new(f, DesignSpec::new(1, vec![1, 1]).unwrap(), y).unwrap();
    let truth = true_dwate(&po, WeightScheme::InverseClusterPeriodSize).unwrap();
    assert!((truth.tau[0] - 2.0).abs() < 1e-15);
    // τ̂_T is 0 or 4 with equal probability
    let m = exhaustive_moments(
        &po,
        &EstimatorSpec::unadjusted(Level::Total),
        WeightScheme::InverseClusterPeriodSize,
        MomentOptions::default(),
    )
    .unwrap();
    assert_eq!(m.assignments, 2);
    assert!((m.mean_tau[0] - 2.0).abs() < 1e-15);
    assert!((m.cov_tau[(0, 0)] - 4.0).abs() < 1e-14);
    assert!(m.mean_scaled_cov[(0, 0)].is_nan());
}

#[test]
fn constant_effect_truth() {
    let po = random_table(&RandomTableConfig::new(vec![3, 3, 3]), 5).unwrap();
    let shifted = PotentialOutcomeTable::from_fn(
        Arc::clone(po.frame_arc()),
        po.design().clone(),
        |i, a, j, k| po.outcomes(i, Never, j)[k] + if a == Never { 0.0 } else { 2.0 },
    )
    .unwrap();
    for scheme in [WeightScheme::UniformIndividual, WeightScheme::CustomColumn] {
        let t = true_dwate(&shifted, scheme).unwrap();
        for a in [Period(1), Period(2)] {
            for j in 1..=2 {
                assert!((t.tau(j, a, Never).unwrap() - 2.0).abs() < 1e-12);
            }
        }
        assert!(t.tau(1, Period(1), Period(2)).unwrap().abs() < 1e-12);
    }
}

#[test]
fn hand_variance() {
    let series = ClusterSeries {
        periods: 1,
        values: vec![vec![vec![3.0], vec![0.0]], vec![vec![-1.0], vec![0.0]]],
    };
    let design = DesignSpec::new(1, vec![1, 1]).unwrap();
    let v = finite_pop_variance(&series, &design, Period(1), Never).unwrap();
    assert!((v.vc[(0, 0)] - 10.0).abs() < 1e-15);
    assert!((v.v[(0, 0)] - 2.0).abs() < 1e-15);

    let same = ClusterSeries {
        periods: 1,
        values: vec![vec![vec![1.5], vec![-1.5]], vec![vec![1.5], vec![-1.5]]],
    };
    let v = finite_pop_variance(&same, &design, Period(1), Never).unwrap();
    assert_eq!(v.vc, v.v);
}

#[test]
fn exact_moments_of_total_estimator() {
    // w = N⁻¹ and a constant effect: E[I·Ĉov] = Σ_arms I(I_a − 1)S_a²/I_a²
    let po = random_table(&RandomTableConfig::new(vec![3, 3]), 11).unwrap();
    let po = PotentialOutcomeTable::from_fn(
        Arc::clone(po.frame_arc()),
        po.design().clone(),
        |i, a, j, k| po.outcomes(i, Never, j)[k] + if a == Never { 0.0 } else { 1.5 },
    )
    .unwrap();
    let scheme = WeightScheme::InverseClusterPeriodSize;
    let m = exhaustive_moments(
        &po,
        &EstimatorSpec::unadjusted(Level::Total),
        scheme,
        MomentOptions::default(),
    )
    .unwrap();
    assert!(m.exhaustive);
    assert_eq!(m.assignments, 20);
    let sys = po.weight_system(scheme).unwrap();
    let xi = theorem_residuals(&po, &sys, &EstimatorSpec::unadjusted(Level::Total)).unwrap();
    let n = 6.0;
    let s2 = |a: AdoptionTime| (0..6).map(|i| xi.get(a, i, 0).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = n * 2.0 / 9.0 * (s2(Period(1)) + s2(Never));
    assert!((m.mean_scaled_cov[(0, 0)] - expected).abs() < 1e-10 * expected);
    // exact variance of a difference in means: V / (I − 1)
    let v = finite_pop_variance(&xi, po.design(), Period(1), Never).unwrap();
    assert!((m.cov_tau[(0, 0)] - v.v[(0, 0)] / (n - 1.0)).abs() < 1e-12);
}

#[test]
fn default_suite_passes_and_self_test_fails() {
    let report = run_suite(&SuiteConfig::default()).unwrap();
    for c in &report.checks {
        assert!(c.passed, "{}: {} vs {}", c.name, c.value, c.threshold);
    }
    assert_eq!(report.enumerated_assignments, 270);
    let broken = run_suite(&SuiteConfig {
        self_test: true,
        tables: 2,
        ..SuiteConfig::default()
    })
    .unwrap();
    assert_eq!(
        broken.first_failure().unwrap().name,
        "finite-population PSD"
    );
}

mod invariants {
    use super::*;
    use proptest::prelude::*;
    use srcre_core::oracle::{efficiency_inequalities, EfficiencyTerms};

    const SCHEMES: [WeightScheme; 3] = [
        WeightScheme::UniformIndividual,
        WeightScheme::InverseClusterPeriodSize,
        WeightScheme::CustomColumn,
    ];

    fn table(seed: u64, periods: usize) -> PotentialOutcomeTable {
        let mut cfg = RandomTableConfig::new(vec![4; periods + 1]);
        cfg.sizes = (1, 8);
        random_table(&cfg, seed).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conservative_part_dominates(seed in 0u64..100_000, periods in 1usize..=3, scheme in 0usize..3) {
            let po = table(seed, periods);
            let sys = po.weight_system(SCHEMES[scheme]).unwrap();
            let series = eps_tilde_series(&po, &sys);
            let arms = AdoptionTime::all(periods);
            for (x, &a) in arms.iter().enumerate() {
                for &b in &arms[x + 1..] {
                    let v = finite_pop_variance(&series, po.design(), a, b).unwrap();
                    let gap = &v.vc - &v.v;
                    let m = srcre_core::linalg::min_eigenvalue(&gap);
                    prop_assert!(m >= -1e-10 * v.vc.trace().max(1.0));
                    prop_assert!(srcre_core::linalg::min_eigenvalue(&v.v) >= -1e-10 * v.vc.trace().max(1.0));
                }
            }
        }

        #[test]
        fn estimand_routes_agree(seed in 0u64..100_000, periods in 1usize..=3, scheme in 0usize..3) {
            let t = true_dwate(&table(seed, periods), SCHEMES[scheme]).unwrap();
            prop_assert!(t.max_route_discrepancy() <= 1e-12);
        }

        #[test]
        fn efficiency_chains_hold(seed in 0u64..100_000, periods in 1usize..=2, scheme in 0usize..3) {
            let po = table(seed, periods);
            let r = efficiency_inequalities(&po, SCHEMES[scheme], &EfficiencyTerms::all(po.frame())).unwrap();
            prop_assert!(r.min_slack() >= -1e-9, "{:?}", r.flagged());
        }
    }
}
