use serde::Serialize;

use crate::data::{Covariate, WeightScheme};
use crate::design::DEFAULT_ENUMERATION_CAP;
use crate::error::Result;
use crate::estimators::{pair_order, EstimatorSpec, Level};
use crate::linalg::min_eigenvalue;
use crate::oracle::{
    efficiency_inequalities, eps_tilde_series, exhaustive_moments, finite_pop_variance,
    random_table, theorem_residuals, true_dwate, EfficiencyTerms, MomentOptions, RandomTableConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random tables per table-level check.
    pub tables: usize,
    pub cap: u64,
    /// Negate one entry of `V_c − V` so the PSD check must fail.
    pub self_test: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20240101,
            tables: 20,
            cap: DEFAULT_ENUMERATION_CAP,
            self_test: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
    pub enumerated_assignments: usize,
    pub warnings: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

const SCHEMES: [WeightScheme; 3] = [
    WeightScheme::UniformIndividual,
    WeightScheme::InverseClusterPeriodSize,
    WeightScheme::CustomColumn,
];

fn table_config(n: usize) -> RandomTableConfig {
    let shapes: [&[usize]; 4] = [&[3, 3], &[3, 3, 3], &[4, 3, 3, 3], &[5, 4, 3]];
    RandomTableConfig::new(shapes[n % shapes.len()].to_vec())
}

/// Default small-design oracle suite.
pub fn run_suite(cfg: &SuiteConfig) -> Result<OracleReport> {
    let mut checks = Vec::new();
    let mut warnings = Vec::new();

    // re-expressions of τ and the centering identity
    let (mut route, mut centering) = (0.0_f64, 0.0_f64);
    for t in 0..cfg.tables {
        let po = random_table(&table_config(t), cfg.seed.wrapping_add(t as u64))?;
        for scheme in SCHEMES {
            route = route.max(true_dwate(&po, scheme)?.max_route_discrepancy());
            let eps = eps_tilde_series(&po, &po.weight_system(scheme)?);
            for arm in &eps.values {
                let scale = arm.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
                for j in 0..po.periods() {
                    let s: f64 = arm.iter().map(|row| row[j]).sum();
                    centering = centering.max(s.abs() / scale);
                }
            }
        }
    }
    checks.push(CheckResult {
        name: "re-expression agreement".into(),
        passed: route <= 1e-12,
        value: route,
        threshold: 1e-12,
        detail: format!("{} tables x {} weight schemes", cfg.tables, SCHEMES.len()),
    });
    checks.push(CheckResult {
        name: "centering identity".into(),
        passed: centering <= 1e-12,
        value: centering,
        threshold: 1e-12,
        detail: "sum over clusters of eps_tilde".into(),
    });

    // V_c − V is a sum of outer products
    let mut worst = f64::INFINITY;
    for t in 0..cfg.tables {
        let po = random_table(&table_config(t), cfg.seed.wrapping_add(1000 + t as u64))?;
        let sys = po.weight_system(WeightScheme::CustomColumn)?;
        let series = [
            eps_tilde_series(&po, &sys),
            theorem_residuals(
                &po,
                &sys,
                &EstimatorSpec::adjusted(Level::Individual, vec![Covariate::X(0)]),
            )?,
            theorem_residuals(
                &po,
                &sys,
                &EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi]),
            )?,
        ];
        for s in &series {
            for (a, b) in pair_order(po.periods()) {
                let v = finite_pop_variance(s, po.design(), a, b)?;
                let mut diff = &v.vc - &v.v;
                if cfg.self_test {
                    diff[(0, 0)] = -diff[(0, 0)];
                }
                let tr = diff.trace().abs().max(f64::MIN_POSITIVE);
                worst = worst.min(min_eigenvalue(&diff) / tr);
            }
        }
    }
    checks.push(CheckResult {
        name: "finite-population PSD".into(),
        passed: worst >= -1e-10,
        value: worst,
        threshold: -1e-10,
        detail: "min eigenvalue of V_c - V over trace".into(),
    });

    // unbiasedness of the scaled-total estimator by enumeration
    let po = random_table(&RandomTableConfig::new(vec![2, 2, 2]), cfg.seed)?;
    let mut enumerated = 0;
    let mut bias = 0.0_f64;
    for scheme in SCHEMES {
        let m = exhaustive_moments(
            &po,
            &EstimatorSpec::unadjusted(Level::Total),
            scheme,
            MomentOptions {
                cap: cfg.cap,
                ..MomentOptions::default()
            },
        )?;
        if !m.exhaustive {
            warnings.push(format!(
                "enumeration cap {} exceeded; moments from {} Monte Carlo draws",
                cfg.cap, m.assignments
            ));
        }
        enumerated += m.assignments;
        let truth = true_dwate(&po, scheme)?;
        // sampled moments are judged up to 5 Monte Carlo standard errors
        for ((est, tau), se) in m.mean_tau.iter().zip(&truth.tau).zip(&m.mc_se) {
            bias = bias.max((est - tau).abs() - 5.0 * se);
        }
    }
    checks.push(CheckResult {
        name: "unbiasedness by enumeration".into(),
        passed: bias <= 1e-10,
        value: bias,
        threshold: 1e-10,
        detail: "max |mean(tau_T) - tau| - 5 MC SE over pairs and periods".into(),
    });

    // efficiency orderings
    let mut slack = f64::INFINITY;
    for t in 0..cfg.tables {
        let mut tc = table_config(t);
        tc.sizes = (3, 8);
        let po = random_table(&tc, cfg.seed.wrapping_add(2000 + t as u64))?;
        let terms = EfficiencyTerms::all(po.frame());
        for scheme in SCHEMES {
            slack = slack.min(efficiency_inequalities(&po, scheme, &terms)?.min_slack());
        }
    }
    checks.push(CheckResult {
        name: "inequality chains".into(),
        passed: slack >= -1e-9,
        value: slack,
        threshold: -1e-9,
        detail: "min relative slack over six orderings".into(),
    });

    Ok(OracleReport {
        checks,
        enumerated_assignments: enumerated,
        warnings,
    })
}
