use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use srcre_core::design::DesignSpec;
use srcre_core::oracle::{run_suite, OracleReport, SuiteConfig};
use srcre_core::sim::{run_replications, SimConfig};
use srcre_core::variance::{wald_ci, PairCovariance};
use srcre_core::{
    build_b, classify_pair, estimate_summary, fit, load_dataset, sandwich_with, DerivedWeights,
    SandwichOptions,
};

use crate::config::{EstimateConfig, VerifyConfig};
use crate::report::{num, CliError, EXIT_VERIFY};

/// Flags shared by every subcommand.
pub struct Common {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub df_correction: bool,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(&format!("cannot create {}", dir.display()), e))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(name, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(name, e))?;
    Ok(dir.join(name))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::io("csv output", e)
}

#[derive(Serialize)]
struct FitRecord {
    estimator: String,
    report: srcre_core::estimators::EstimateReport,
    covariance: Option<Vec<PairCovariance>>,
    dropped_terms: Vec<(usize, String)>,
    df_correction: bool,
}

pub fn estimate(cfg: &EstimateConfig, common: &Common) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let d = load_dataset(
        &cfg.records,
        cfg.cluster_covariates.as_deref(),
        &cfg.columns,
    )?;
    let frame = d.frame();
    let design = DesignSpec::from_dataset(&d)?;
    let mut roster = Vec::new();
    for item in &cfg.estimators {
        let (name, spec) = item.resolve(frame)?;
        if roster.iter().any(|(n, _)| n == &name) {
            return Err(CliError::validation(
                "invalid_config",
                &format!("estimator name `{name}` repeated"),
            ));
        }
        roster.push((name, spec));
    }
    let several = cfg.weight_schemes.len() > 1;
    let opts = SandwichOptions {
        df_correction: common.df_correction,
    };

    let mut dwate = csv_writer(&out, "dwate.csv")?;
    dwate
        .write_record([
            "j",
            "a",
            "a_prime",
            "class",
            "tau_hat",
            "se",
            "ci_lo",
            "ci_hi",
            "estimator",
        ])
        .map_err(csv_err)?;
    let mut summary = csv_writer(&out, "summary.csv")?;
    summary
        .write_record(["summary", "estimator", "theta_hat", "se", "ci_lo", "ci_hi"])
        .map_err(csv_err)?;
    let mut records = Vec::new();

    for &scheme in &cfg.weight_schemes {
        let w = DerivedWeights::new(&d, scheme)?;
        for (name, spec) in &roster {
            let label = if several {
                format!("{name}@{}", scheme.label())
            } else {
                name.clone()
            };
            let context = |e: srcre_core::Error| {
                CliError::from(e)
                    .with("estimator", label.as_str())
                    .with("weight_scheme", scheme.label())
            };
            let est = fit(&d, &w, spec).map_err(context)?;
            // a single-cluster arm leaves the covariance undefined; point estimates still stand
            let cov = match sandwich_with(&est, &d, &w, opts) {
                Ok(c) => Some(c),
                Err(e @ srcre_core::Error::InsufficientClusters { .. }) => {
                    eprintln!("warning: {label}: {e}; standard errors are NaN");
                    None
                }
                Err(e) => return Err(context(e)),
            };
            for p in est.pairs() {
                let class = classify_pair(p.j, p.a, p.a_prime).map_err(context)?;
                let se = match &cov {
                    Some(c) => c.se(p.j, p.a, p.a_prime).map_err(context)?,
                    None => f64::NAN,
                };
                let (lo, hi) = wald_ci(p.tau, se, cfg.ci_level);
                dwate
                    .write_record([
                        p.j.to_string(),
                        p.a.to_string(),
                        p.a_prime.to_string(),
                        class.label(),
                        num(p.tau),
                        num(se),
                        num(lo),
                        num(hi),
                        label.clone(),
                    ])
                    .map_err(csv_err)?;
            }
            for s in &cfg.summaries {
                let b = build_b(s, w.system(), &design).map_err(context)?;
                let (theta, se, ci) = match &cov {
                    Some(c) => {
                        let e = estimate_summary(&est, c, &b, cfg.ci_level).map_err(context)?;
                        (e.theta, e.se, e.ci)
                    }
                    None => {
                        let theta = b.iter().zip(est.stacked_tau()).map(|(x, t)| x * t).sum();
                        (theta, f64::NAN, (f64::NAN, f64::NAN))
                    }
                };
                summary
                    .write_record([
                        s.name().to_string(),
                        label.clone(),
                        num(theta),
                        num(se),
                        num(ci.0),
                        num(ci.1),
                    ])
                    .map_err(csv_err)?;
            }
            records.push(FitRecord {
                estimator: label.clone(),
                report: est.report(frame),
                covariance: cov.as_ref().map(|c| c.report()),
                dropped_terms: est
                    .dropped
                    .iter()
                    .map(|(j, t)| (*j, t.name(frame)))
                    .collect(),
                df_correction: opts.df_correction,
            });
        }
    }
    dwate.flush().map_err(csv_err)?;
    summary.flush().map_err(csv_err)?;
    let json = write_json(&out, "estimates.json", &records)?;
    Ok(vec![out.join("dwate.csv"), out.join("summary.csv"), json])
}

pub fn simulate(cfg: &SimConfig, common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.df_correction |= common.df_correction;
    let report = run_replications(&cfg)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut w = create(&out, "sim_metrics.csv")?;
    report.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io("sim_metrics.csv", e))?;
    let json = write_json(&out, "sim_report.json", &report)?;
    for f in &report.failures {
        eprintln!(
            "warning: {} failed in {} replications: {}",
            f.estimator, f.count, f.first_error
        );
    }
    Ok(vec![out.join("sim_metrics.csv"), json])
}

pub fn verify(cfg: &VerifyConfig, common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut suite = SuiteConfig::from(cfg);
    if let Some(seed) = common.seed {
        suite.seed = seed;
    }
    let report: OracleReport = run_suite(&suite)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.checks {
        println!(
            "{} {}: {:.3e} (threshold {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let json = write_json(&out, "verify_report.json", &report)?;
    if let Some(c) = report.first_failure() {
        return Err(CliError::new(
            EXIT_VERIFY,
            "verification_failed",
            &format!("check `{}` failed", c.name),
        )
        .with("check", c.name.as_str())
        .with("value", c.value)
        .with("threshold", c.threshold)
        .with("detail", c.detail.as_str())
        .with("report", json.display().to_string()));
    }
    Ok(vec![json])
}
