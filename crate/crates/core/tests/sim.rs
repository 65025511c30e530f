use srcre_core::design::stream_rng;
use srcre_core::sim::{
    default_roster, draw_table, run_replications, size_bounds, CustomDgp, SimConfig, Study,
};
use srcre_core::{Error, WeightScheme};

fn small(study: Study) -> SimConfig {
    SimConfig {
        clusters: 36,
        replications: 40,
        seed: 9,
        ..SimConfig::study(study)
    }
}

#[test]
fn default_rosters() {
    let names = |s| {
        default_roster(s)
            .into_iter()
            .map(|e| e.name)
            .collect::<Vec<_>>()
    };
    assert_eq!(
        names(Study::StudyI),
        [
            "I",
            "I_adj",
            "I_adj[C]",
            "I_ancova",
            "A",
            "A_adj",
            "T",
            "T_adj[pi]",
            "T_adj[pi,piC]"
        ]
    );
    assert_eq!(names(Study::StudyII).len(), 7);
    assert!(!names(Study::StudyII).contains(&"A".to_string()));
}

#[test]
fn invalid_configs_are_rejected() {
    let invalid = |cfg: SimConfig| matches!(cfg.validate(), Err(Error::InvalidConfig(_)));
    assert!(invalid(SimConfig {
        replications: 0,
        ..small(Study::StudyI)
    }));
    assert!(invalid(SimConfig {
        periods: 3,
        ..small(Study::StudyII)
    }));
    assert!(invalid(SimConfig {
        weight_scheme: WeightScheme::CustomColumn,
        ..small(Study::StudyI)
    }));
    assert!(invalid(SimConfig {
        study: Study::Custom,
        custom: CustomDgp {
            effects: vec![1.0],
            ..CustomDgp::default()
        },
        ..small(Study::StudyI)
    }));
    assert!(invalid(SimConfig {
        ci_level: 1.0,
        ..small(Study::StudyI)
    }));
    assert!(matches!(
        run_replications(&SimConfig {
            replications: 0,
            ..small(Study::StudyI)
        }),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn config_parses_roster_terms() {
    let cfg: SimConfig = serde_json::from_str(
        r#"{"study": "study_ii", "clusters": 30, "replications": 5,
            "roster": [{"name": "T_pc", "level": "total", "adjustment": "fully_interacted",
                        "covariates": ["pi", "xtilde(x)"]},
                       {"level": "individual"}]}"#,
    )
    .unwrap();
    cfg.validate().unwrap();
    let roster = cfg.resolved_roster().unwrap();
    assert_eq!(roster[0].name, "T_pc");
    assert_eq!(roster.len(), 2);

    let duplicate: SimConfig = serde_json::from_str(
        r#"{"roster": [{"name": "a", "level": "total"}, {"name": "a", "level": "average"}]}"#,
    )
    .unwrap();
    assert!(matches!(duplicate.validate(), Err(Error::InvalidConfig(_))));
    assert!(serde_json::from_str::<SimConfig>(r#"{"clusterz": 3}"#).is_err());
    assert!(serde_json::from_str::<SimConfig>(
        r#"{"roster": [{"level": "total", "covariates": ["nope"]}]}"#
    )
    .map_err(|e| e.to_string())
    .and_then(|c| c.validate().map_err(|e| e.to_string()))
    .is_err());
}

#[test]
fn size_law_bounds() {
    let cfg = SimConfig::study(Study::StudyI);
    let close =
        |(lo, hi): (f64, f64), (a, b): (f64, f64)| (lo - a).abs() < 1e-12 && (hi - b).abs() < 1e-12;
    assert!(close(size_bounds(&cfg, 0), (12.0, 28.0)));
    assert!(close(size_bounds(&cfg, 1), (6.0, 14.0)));

    let design = cfg.design().unwrap();
    let po = draw_table(&cfg, &design, &mut stream_rng(3, 0)).unwrap();
    for j in 0..2 {
        let (lo, hi) = size_bounds(&cfg, j);
        for i in 0..po.n_clusters() {
            let n = po.frame().cell(i, j).size as f64;
            assert!(
                n >= lo.round() && n <= hi.round(),
                "cluster {i} period {j}: {n}"
            );
        }
    }
}

#[test]
fn covariate_is_centered_with_realised_weights() {
    let cfg = SimConfig::study(Study::StudyI);
    let po = draw_table(&cfg, &cfg.design().unwrap(), &mut stream_rng(4, 0)).unwrap();
    let frame = po.frame();
    for j in 0..2 {
        let total: usize = (0..po.n_clusters()).map(|i| frame.cell(i, j).size).sum();
        let mean = (0..po.n_clusters())
            .flat_map(|i| frame.cell(i, j).x.iter())
            .sum::<f64>()
            / total as f64;
        // X ~ ij/I + U(−1, 1): the period mean is near (j+1)(I+1)/(2I)
        let expected = (j + 1) as f64 * 261.0 / 520.0;
        assert!((mean - expected).abs() < 0.05, "period {j}: {mean}");
    }
}

#[test]
fn noiseless_additive_model_is_recovered_exactly() {
    let cfg = SimConfig {
        study: Study::Custom,
        custom: CustomDgp {
            level: 0.0,
            size_effect: 0.0,
            effects: vec![1.5, -0.5],
            slope: 0.0,
        },
        noise_sd: 0.0,
        zeta_variance: 0.0,
        replications: 10,
        ..small(Study::StudyI)
    };
    let report = run_replications(&cfg).unwrap();
    assert!(report.failures.is_empty());
    // unadjusted T moves with the level through Iπ, so only the others are exact
    for row in report.rows.iter().filter(|r| r.estimator != "T") {
        assert!(
            row.bias.abs() < 1e-12,
            "{} {}: {}",
            row.estimator,
            row.target,
            row.bias
        );
        assert!(row.empirical_se < 1e-12);
    }
    let t = |target: &str| report.row("T", target).unwrap().mean_truth;
    assert!((t("tau_1(1,inf)") - 1.5).abs() < 1e-12);
    assert!((t("tau_2(2,inf)") + 0.5).abs() < 1e-12);
    assert!(t("tau_1(2,inf)").abs() < 1e-12);
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let cfg = small(Study::StudyII);
    let a = run_replications(&cfg).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_replications(&cfg).unwrap());
    assert_eq!(a, b);
    let c = run_replications(&SimConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn report_layout() {
    let cfg = SimConfig {
        fixed_table: true,
        ..small(Study::StudyI)
    };
    let report = run_replications(&cfg).unwrap();
    assert_eq!(report.arm_sizes, vec![12, 12, 12]);
    assert_eq!(report.estimators.len(), 9);
    for t in [
        "tau_1(1,2)",
        "tau_2(2,inf)",
        "owte_sim",
        "oawte_sim",
        "owte_cal_standin",
    ] {
        assert!(report.targets.iter().any(|x| x == t), "{t}");
    }
    assert_eq!(
        report.rows.len(),
        report.estimators.len() * report.targets.len()
    );
    assert!(report.equivalence_max_discrepancy.unwrap() <= 1e-10);
    for r in &report.rows {
        assert!((0.0..=1.0).contains(&r.coverage));
        assert_eq!(r.replications_used + r.failures, 40);
    }

    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("estimator,target,metric,value"));
    assert!(lines.any(|l| l.starts_with("I,\"tau_1(1,inf)\",coverage,")));
}
