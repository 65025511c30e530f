mod common;

use common::{random_dataset, rel_gap};
use proptest::prelude::*;
use srcre_core::data::{CellInput, ClusterInput};
use srcre_core::estimators::full_wls_oracle;
use srcre_core::{
    fit, sandwich, sandwich_with, AdoptionTime, Covariate, Dataset, DerivedWeights, Error,
    EstimatorSpec, Level, SandwichOptions, WeightScheme,
};
use AdoptionTime::{Never, Period};

const SCHEMES: [WeightScheme; 3] = [
    WeightScheme::UniformIndividual,
    WeightScheme::InverseClusterPeriodSize,
    WeightScheme::CustomColumn,
];

fn cell(outcomes: &[f64], weights: Option<&[f64]>) -> CellInput {
    CellInput {
        outcomes: outcomes.to_vec(),
        x: Vec::new(),
        weights: weights.map(<[f64]>::to_vec),
        c: Vec::new(),
    }
}

/// Four clusters in one period, two per arm, with individual weights.
fn weighted_pair() -> Dataset {
    let rows: [(AdoptionTime, &[f64], &[f64]); 4] = [
        (Period(1), &[4.0, 6.0], &[1.0, 3.0]),
        (Period(1), &[1.0, 2.0, 9.0], &[2.0, 2.0, 1.0]),
        (Never, &[0.0], &[2.0]),
        (Never, &[3.0, 1.0], &[1.0, 1.0]),
    ];
    let clusters = rows
        .iter()
        .enumerate()
        .map(|(i, (a, y, w))| ClusterInput {
            id: format!("k{i}"),
            adoption: *a,
            cells: vec![cell(y, Some(w))],
        })
        .collect();
    Dataset::from_clusters(1, vec![], vec![], clusters).unwrap()
}

#[test]
fn unadjusted_individual_matches_weighted_means() {
    let d = weighted_pair();
    let w = DerivedWeights::new(&d, WeightScheme::CustomColumn).unwrap();
    let est = fit(&d, &w, &EstimatorSpec::unadjusted(Level::Individual)).unwrap();
    // treated Σwy = 4 + 18 + 2 + 4 + 9 over Σw = 9; control 0 + 3 + 1 over 4
    let treated = 37.0 / 9.0;
    let control = 1.0;
    assert!((est.tau(1, Period(1), Never) - (treated - control)).abs() < 1e-13);

    // CR for a weighted mean: Σ_i (Σ_k w e)² / (Σw)²
    let score = |ys: &[f64], ws: &[f64], m: f64| -> f64 {
        ys.iter().zip(ws).map(|(y, w)| w * (y - m)).sum()
    };
    let v_t = (score(&[4.0, 6.0], &[1.0, 3.0], treated).powi(2)
        + score(&[1.0, 2.0, 9.0], &[2.0, 2.0, 1.0], treated).powi(2))
        / 81.0;
    let v_c = (score(&[0.0], &[2.0], control).powi(2)
        + score(&[3.0, 1.0], &[1.0, 1.0], control).powi(2))
        / 16.0;
    let cov = sandwich(&est, &d, &w).unwrap();
    let se = cov.se(1, Period(1), Never).unwrap();
    assert!((se - (v_t + v_c).sqrt()).abs() < 1e-13);
}

#[test]
fn df_correction_scales_by_cluster_ratio() {
    let d = random_dataset(7, 12, 2, 1, 1);
    let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
    let est = fit(&d, &w, &EstimatorSpec::unadjusted(Level::Average)).unwrap();
    let raw = sandwich(&est, &d, &w).unwrap();
    let inflated = sandwich_with(
        &est,
        &d,
        &w,
        SandwichOptions {
            df_correction: true,
        },
    )
    .unwrap();
    let ratio = 12.0 / 11.0;
    let scaled: Vec<f64> = raw.beta_cov.iter().map(|v| v * ratio).collect();
    assert!(rel_gap(&scaled, inflated.beta_cov.as_slice()) < 1e-14);
}

#[test]
fn constant_outcomes_give_zero_covariance() {
    let d = random_dataset(8, 12, 2, 1, 0);
    let d = {
        // replace outcomes by a function of (arm, period) only
        let frame = d.frame_arc().clone();
        let outcomes = (0..d.n_clusters())
            .map(|i| {
                (0..d.periods())
                    .map(|j| {
                        vec![3.0 * d.adoption(i).arm(2) as f64 + j as f64; frame.cell(i, j).size]
                    })
                    .collect()
            })
            .collect();
        Dataset::new(frame, d.adoption_times().to_vec(), outcomes).unwrap()
    };
    for scheme in SCHEMES {
        let w = DerivedWeights::new(&d, scheme).unwrap();
        for level in [Level::Individual, Level::Average] {
            let est = fit(&d, &w, &EstimatorSpec::unadjusted(level)).unwrap();
            let cov = sandwich(&est, &d, &w).unwrap();
            assert!(cov.beta_cov.amax() < 1e-24, "{level:?} {scheme:?}");
            assert!((est.tau(2, Period(1), Never) + 6.0).abs() < 1e-12);
        }
    }
}

#[test]
fn singleton_cells_make_average_and_individual_identical() {
    let d = random_dataset(9, 15, 2, 1, 1);
    let frame = d.frame();
    let clusters = (0..d.n_clusters())
        .map(|i| ClusterInput {
            id: frame.clusters[i].id.clone(),
            adoption: d.adoption(i),
            cells: (0..d.periods())
                .map(|j| CellInput {
                    outcomes: vec![d.outcomes(i, j)[0]],
                    x: vec![frame.cell(i, j).x[0]],
                    weights: None,
                    c: frame.cell(i, j).c.clone(),
                })
                .collect(),
        })
        .collect();
    let d =
        Dataset::from_clusters(2, frame.x_names.clone(), frame.c_names.clone(), clusters).unwrap();
    let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
    // on singleton cells an individual covariate is its own cluster mean
    let pairs = [
        (vec![], vec![]),
        (vec![Covariate::X(0)], vec![Covariate::XBar(0)]),
        (
            vec![Covariate::X(0), Covariate::C(0)],
            vec![Covariate::XBar(0), Covariate::C(0)],
        ),
    ];
    for (ind, avg) in pairs {
        let spec = |level, terms: Vec<Covariate>| {
            if terms.is_empty() {
                EstimatorSpec::unadjusted(level)
            } else {
                EstimatorSpec::adjusted(level, terms)
            }
        };
        let (spec_i, spec_a) = (spec(Level::Individual, ind), spec(Level::Average, avg));
        let i = fit(&d, &w, &spec_i).unwrap();
        let a = fit(&d, &w, &spec_a).unwrap();
        assert!(rel_gap(&i.beta, &a.beta) < 1e-12);
        let ci = sandwich(&i, &d, &w).unwrap();
        let ca = sandwich(&a, &d, &w).unwrap();
        assert!(rel_gap(ci.beta_cov.as_slice(), ca.beta_cov.as_slice()) < 1e-12);
    }
}

#[test]
fn constant_pi_is_dropped_under_inverse_size_weights() {
    let d = random_dataset(10, 12, 2, 1, 1);
    let w = DerivedWeights::new(&d, WeightScheme::InverseClusterPeriodSize).unwrap();
    let est = fit(
        &d,
        &w,
        &EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi]),
    )
    .unwrap();
    assert_eq!(est.dropped, vec![(1, Covariate::Pi), (2, Covariate::Pi)]);
    let plain = fit(&d, &w, &EstimatorSpec::unadjusted(Level::Total)).unwrap();
    assert!(rel_gap(&est.beta, &plain.beta) < 1e-12);
}

#[test]
fn constant_cluster_covariate_is_rank_deficient() {
    let d = random_dataset(11, 12, 1, 1, 1);
    let frame = d.frame();
    let clusters = (0..d.n_clusters())
        .map(|i| ClusterInput {
            id: frame.clusters[i].id.clone(),
            adoption: d.adoption(i),
            cells: vec![CellInput {
                outcomes: d.outcomes(i, 0).to_vec(),
                x: frame.cell(i, 0).x.clone(),
                weights: None,
                c: vec![2.5],
            }],
        })
        .collect();
    let d =
        Dataset::from_clusters(1, frame.x_names.clone(), frame.c_names.clone(), clusters).unwrap();
    let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
    let err = fit(
        &d,
        &w,
        &EstimatorSpec::adjusted(Level::Average, vec![Covariate::C(0)]),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::RankDeficientCovariates { period: 1, .. }),
        "{err:?}"
    );
}

#[test]
fn adjusted_fit_needs_p_plus_two_clusters_per_arm() {
    // 9 clusters over 4 arms: the smallest arm has 2 clusters
    let d = random_dataset(12, 9, 3, 1, 1);
    let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
    assert!(fit(&d, &w, &EstimatorSpec::unadjusted(Level::Average)).is_ok());
    let err = fit(
        &d,
        &w,
        &EstimatorSpec::adjusted(Level::Average, vec![Covariate::C(0)]),
    )
    .unwrap_err();
    assert!(matches!(err, Error::TooFewClusters { .. }), "{err:?}");
}

#[test]
fn total_estimator_is_not_location_invariant() {
    let d = random_dataset(13, 12, 1, 0, 0);
    let shifted = d.map_outcomes(|y| y + 10.0);
    let tau = |d: &Dataset, l| {
        let w = DerivedWeights::new(d, WeightScheme::UniformIndividual).unwrap();
        fit(d, &w, &EstimatorSpec::unadjusted(l))
            .unwrap()
            .tau(1, Period(1), Never)
    };
    assert!((tau(&shifted, Level::Individual) - tau(&d, Level::Individual)).abs() < 1e-12);
    assert!((tau(&shifted, Level::Total) - tau(&d, Level::Total)).abs() > 1e-6);
}

fn spec_strategy() -> impl Strategy<Value = EstimatorSpec> {
    use Covariate::*;
    prop_oneof![
        Just(EstimatorSpec::unadjusted(Level::Individual)),
        Just(EstimatorSpec::adjusted(Level::Individual, vec![X(0)])),
        Just(EstimatorSpec::adjusted(Level::Individual, vec![X(0), C(0)])),
        Just(EstimatorSpec::ancova(vec![X(0)])),
        Just(EstimatorSpec::ancova(vec![XBar(0), C(0)])),
        Just(EstimatorSpec::unadjusted(Level::Average)),
        Just(EstimatorSpec::adjusted(Level::Average, vec![XBar(0)])),
        Just(EstimatorSpec::adjusted(Level::Average, vec![C(0), Pi])),
        Just(EstimatorSpec::unadjusted(Level::Total)),
        Just(EstimatorSpec::adjusted(Level::Total, vec![Pi])),
        Just(EstimatorSpec::adjusted(Level::Total, vec![Pi, PiC(0)])),
        Just(EstimatorSpec::adjusted(Level::Total, vec![XTilde(0)])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_fit_equals_full_design_oracle(
        seed in 0u64..10_000,
        periods in 1usize..=3,
        scheme in 0usize..3,
        spec in spec_strategy(),
    ) {
        let d = random_dataset(seed, 8 * (periods + 1), periods, 1, 1);
        let w = DerivedWeights::new(&d, SCHEMES[scheme]).unwrap();
        let est = fit(&d, &w, &spec).unwrap();
        let cov = sandwich(&est, &d, &w).unwrap();
        let oracle = full_wls_oracle(&d, &w, &spec).unwrap();
        prop_assert!(rel_gap(&est.beta, &oracle.estimate.beta) < 1e-9);
        prop_assert!(rel_gap(cov.beta_cov.as_slice(), oracle.beta_cov.as_slice()) < 1e-9);
    }

    #[test]
    fn sandwich_is_symmetric_psd(
        seed in 0u64..10_000,
        periods in 1usize..=3,
        scheme in 0usize..3,
        spec in spec_strategy(),
    ) {
        let d = random_dataset(seed, 7 * (periods + 1), periods, 1, 1);
        let w = DerivedWeights::new(&d, SCHEMES[scheme]).unwrap();
        let cov = sandwich(&fit(&d, &w, &spec).unwrap(), &d, &w).unwrap();
        let e = &cov.beta_cov;
        prop_assert!((e - e.transpose()).amax() <= 1e-14 * e.amax().max(1e-300));
        prop_assert!(cov.psd_margin() >= -1e-10);
    }

    #[test]
    fn individual_and_average_agree(
        seed in 0u64..10_000,
        periods in 1usize..=3,
        scheme in prop::sample::select(vec![0usize, 2]),
        adjust in any::<bool>(),
    ) {
        let d = random_dataset(seed, 5 * (periods + 1), periods, 1, 1);
        let w = DerivedWeights::new(&d, SCHEMES[scheme]).unwrap();
        let spec = |l| if adjust {
            EstimatorSpec::adjusted(l, vec![Covariate::XBar(0), Covariate::C(0)])
        } else {
            EstimatorSpec::unadjusted(l)
        };
        let i = fit(&d, &w, &spec(Level::Individual)).unwrap();
        let a = fit(&d, &w, &spec(Level::Average)).unwrap();
        prop_assert!(rel_gap(&i.beta, &a.beta) < 1e-10);
        let ci = sandwich(&i, &d, &w).unwrap();
        let ca = sandwich(&a, &d, &w).unwrap();
        prop_assert!(rel_gap(ci.beta_cov.as_slice(), ca.beta_cov.as_slice()) < 1e-10);
    }

    #[test]
    fn inverse_size_weights_collapse_levels(
        seed in 0u64..10_000,
        periods in 1usize..=3,
        adjust in any::<bool>(),
    ) {
        let d = random_dataset(seed, 5 * (periods + 1), periods, 1, 1);
        let w = DerivedWeights::new(&d, WeightScheme::InverseClusterPeriodSize).unwrap();
        let spec = |l| if adjust {
            EstimatorSpec::adjusted(l, vec![Covariate::C(0)])
        } else {
            EstimatorSpec::unadjusted(l)
        };
        let a = fit(&d, &w, &spec(Level::Average)).unwrap();
        let t = fit(&d, &w, &spec(Level::Total)).unwrap();
        prop_assert!(rel_gap(&a.beta, &t.beta) < 1e-10);
        let ca = sandwich(&a, &d, &w).unwrap();
        let ct = sandwich(&t, &d, &w).unwrap();
        prop_assert!(rel_gap(ca.beta_cov.as_slice(), ct.beta_cov.as_slice()) < 1e-10);
    }

    #[test]
    fn individual_estimate_shifts_with_outcomes(
        seed in 0u64..10_000,
        m in -100.0f64..100.0,
        scheme in 0usize..3,
    ) {
        let d = random_dataset(seed, 12, 2, 1, 1);
        let w = DerivedWeights::new(&d, SCHEMES[scheme]).unwrap();
        let shifted = d.map_outcomes(|y| y + m);
        let ws = DerivedWeights::new(&shifted, SCHEMES[scheme]).unwrap();
        let spec = EstimatorSpec::adjusted(Level::Individual, vec![Covariate::X(0)]);
        let base = fit(&d, &w, &spec).unwrap();
        let moved = fit(&shifted, &ws, &spec).unwrap();
        let gap = base
            .stacked_tau()
            .iter()
            .zip(moved.stacked_tau())
            .fold(0.0_f64, |g, (a, b)| g.max((a - b).abs()));
        prop_assert!(gap < 1e-10);
    }
}

#[test]
fn summary_estimate_is_the_b_weighted_sum() {
    use srcre_core::{build_b, estimate_summary, SummarySpec};
    let d = random_dataset(14, 24, 2, 1, 1);
    let w = DerivedWeights::new(&d, WeightScheme::UniformIndividual).unwrap();
    let est = fit(&d, &w, &EstimatorSpec::unadjusted(Level::Total)).unwrap();
    let cov = sandwich(&est, &d, &w).unwrap();
    let design = srcre_core::DesignSpec::from_dataset(&d).unwrap();
    for spec in [
        SummarySpec::OwteSim,
        SummarySpec::OawteSim,
        SummarySpec::calendar_average(&design),
    ] {
        let b = build_b(&spec, w.system(), &design).unwrap();
        assert!(
            (b.iter().sum::<f64>() - 1.0).abs() < 1e-12,
            "{}",
            spec.name()
        );
        let s = estimate_summary(&est, &cov, &b, 0.95).unwrap();
        let theta: f64 = b.iter().zip(est.stacked_tau()).map(|(x, t)| x * t).sum();
        assert!((s.theta - theta).abs() < 1e-12);
        let var = (0..b.len())
            .flat_map(|r| (0..b.len()).map(move |c| (r, c)))
            .map(|(r, c)| b[r] * b[c] * cov.stacked_cov()[(r, c)])
            .sum::<f64>();
        assert!((s.se - var.sqrt()).abs() < 1e-12);
        assert!(s.ci.0 < s.theta && s.theta < s.ci.1);
    }
    let short = estimate_summary(&est, &cov, &[1.0], 0.95).unwrap_err();
    assert!(matches!(short, Error::DimensionMismatch { .. }));
}
