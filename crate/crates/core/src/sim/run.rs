use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Covariate, DerivedWeights, WeightScheme};
use crate::design::{reveal_outcomes, sample_assignment_with, stream_rng, DesignSpec};
use crate::error::{Error, Result};
use crate::estimands::{build_b, estimate_summary};
use crate::estimators::{fit, pair_order, EstimatorSpec, Level};
use crate::numeric::{mean_sd, sum};
use crate::oracle::{true_dwate, PotentialOutcomeTable};
use crate::sim::{draw_table, RosterEntry, SimConfig, Study};
use crate::variance::{sandwich_with, wald_ci, SandwichOptions};

/// Largest tolerated discrepancy between numerically identical estimators.
pub const EQUIVALENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct Outcome {
    estimate: f64,
    se: f64,
    covered: bool,
}

struct Replication {
    truth: Vec<f64>,
    /// Per roster entry: one outcome per target, or the error message.
    results: Vec<std::result::Result<Vec<Outcome>, String>>,
    equivalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: String,
    pub target: String,
    pub replications_used: usize,
    pub failures: usize,
    pub mean_truth: f64,
    pub bias: f64,
    /// `mean(τ̂ − τ) / mean|τ|`; 0 when both vanish, NaN when only the denominator does.
    pub relative_bias: f64,
    /// Standard deviation of `τ̂ − τ` over replications.
    pub empirical_se: f64,
    /// Monte Carlo standard error of `empirical_se`.
    pub empirical_se_mc_se: f64,
    pub mean_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureCount {
    pub estimator: String,
    pub count: usize,
    pub first_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub study: Study,
    pub clusters: usize,
    pub periods: usize,
    pub arm_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub weight_scheme: WeightScheme,
    pub ci_level: f64,
    pub notes: Vec<String>,
    pub estimators: Vec<String>,
    pub targets: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<FailureCount>,
    /// Largest relative discrepancy among the identical estimator pairs.
    pub equivalence_max_discrepancy: Option<f64>,
}

impl SimReport {
    pub fn row(&self, estimator: &str, target: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.target == target)
    }

    /// Long format: `estimator,target,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "target", "metric", "value"])?;
        for r in &self.rows {
            let metrics = [
                ("replications_used", r.replications_used as f64),
                ("failures", r.failures as f64),
                ("mean_truth", r.mean_truth),
                ("bias", r.bias),
                ("relative_bias", r.relative_bias),
                ("empirical_se", r.empirical_se),
                ("empirical_se_mc_se", r.empirical_se_mc_se),
                ("mean_se", r.mean_se),
                ("coverage", r.coverage),
            ];
            for (name, v) in metrics {
                w.write_record([
                    r.estimator.as_str(),
                    r.target.as_str(),
                    name,
                    &format!("{v:.16e}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Target labels: every `τ_j(a, a′)` in stacking order, then the summaries.
fn target_names(
    periods: usize,
    summaries: &[(String, crate::estimands::SummarySpec)],
) -> Vec<String> {
    let mut out = Vec::new();
    for (a, b) in pair_order(periods) {
        for j in 1..=periods {
            out.push(format!("tau_{j}({a},{b})"));
        }
    }
    out.extend(summaries.iter().map(|s| s.0.clone()));
    out
}

/// Norm-wise relative discrepancy `max|x − y| / max(|x|, |y|)`.
fn discrepancy(x: &[f64], y: &[f64]) -> f64 {
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

fn estimates(
    spec: &EstimatorSpec,
    d: &crate::data::Dataset,
    w: &DerivedWeights,
    opts: SandwichOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let est = fit(d, w, spec)?;
    let cov = sandwich_with(&est, d, w, opts)?;
    let se = pair_order(d.periods())
        .into_iter()
        .map(|(a, b)| cov.pair_se(a, b))
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok((est.stacked_tau(), se))
}

fn replicate(
    cfg: &SimConfig,
    design: &DesignSpec,
    roster: &[RosterEntry],
    fixed: Option<&PotentialOutcomeTable>,
    r: usize,
) -> Result<Replication> {
    let owned;
    let po = match fixed {
        Some(po) => po,
        None => {
            owned = draw_table(cfg, design, &mut stream_rng(cfg.seed, 2 * r as u64))?;
            &owned
        }
    };
    let asg = sample_assignment_with(design, &mut stream_rng(cfg.seed, 2 * r as u64 + 1));
    let d = reveal_outcomes(po, &asg)?;
    let sys = Arc::new(po.weight_system(cfg.weight_scheme)?);
    let w = DerivedWeights::with_system(&d, Arc::clone(&sys))?;
    let truth_tau = true_dwate(po, cfg.weight_scheme)?;
    let summaries = cfg.resolved_summaries(design);
    let bs = summaries
        .iter()
        .map(|(_, s)| build_b(s, &sys, design))
        .collect::<Result<Vec<_>>>()?;
    let mut truth = truth_tau.tau.clone();
    for b in &bs {
        truth.push(truth_tau.theta(b)?);
    }

    let opts = SandwichOptions {
        df_correction: cfg.df_correction,
    };
    let level = cfg.ci_level;
    let mut fitted = Vec::with_capacity(roster.len());
    let results = roster
        .iter()
        .map(|entry| {
            let run = || -> Result<Vec<Outcome>> {
                let est = fit(&d, &w, &entry.spec)?;
                let cov = sandwich_with(&est, &d, &w, opts)?;
                let mut out = Vec::with_capacity(truth.len());
                for (n, (a, b)) in pair_order(d.periods()).into_iter().enumerate() {
                    let se = cov.pair_se(a, b)?;
                    for j in 0..d.periods() {
                        let tau = est.tau(j + 1, a, b);
                        let (lo, hi) = wald_ci(tau, se[j], level);
                        let t = truth[n * d.periods() + j];
                        out.push(Outcome {
                            estimate: tau,
                            se: se[j],
                            covered: lo <= t && t <= hi,
                        });
                    }
                }
                for (b, t) in bs.iter().zip(&truth[out.len()..]) {
                    let s = estimate_summary(&est, &cov, b, level)?;
                    out.push(Outcome {
                        estimate: s.theta,
                        se: s.se,
                        covered: s.ci.0 <= *t && *t <= s.ci.1,
                    });
                }
                Ok(out)
            };
            let res = run();
            fitted.push((entry.spec.clone(), res.as_ref().ok().cloned()));
            res.map_err(|e| e.to_string())
        })
        .collect();

    let equivalence = if cfg.equivalence_check && po.frame().px() > 0 {
        let lookup = |spec: &EstimatorSpec| -> Result<(Vec<f64>, Vec<f64>)> {
            match fitted.iter().find(|(s, _)| s == spec) {
                Some((_, Some(out))) => {
                    let k = truth_tau.tau.len();
                    Ok((
                        out[..k].iter().map(|o| o.estimate).collect(),
                        out[..k].iter().map(|o| o.se).collect(),
                    ))
                }
                _ => estimates(spec, &d, &w, opts),
            }
        };
        let pairs = [
            (
                EstimatorSpec::unadjusted(Level::Individual),
                EstimatorSpec::unadjusted(Level::Average),
            ),
            (
                EstimatorSpec::adjusted(Level::Individual, vec![Covariate::XBar(0)]),
                EstimatorSpec::adjusted(Level::Average, vec![Covariate::XBar(0)]),
            ),
        ];
        let mut worst = 0.0_f64;
        for (lhs, rhs) in &pairs {
            let (t1, s1) = lookup(lhs)?;
            let (t2, s2) = lookup(rhs)?;
            // one scale for estimates and SEs so that vanishing SEs compare on the estimate scale
            let gap = discrepancy(&[t1, s1].concat(), &[t2, s2].concat());
            if !(gap <= EQUIVALENCE_TOL) {
                return Err(Error::EquivalenceViolation {
                    replication: r + 1,
                    detail: format!(
                        "{} vs {}: relative discrepancy {gap:e}",
                        lhs.label(po.frame()),
                        rhs.label(po.frame())
                    ),
                });
            }
            worst = worst.max(gap);
        }
        Some(worst)
    } else {
        None
    };
    Ok(Replication {
        truth,
        results,
        equivalence,
    })
}

/// Run every replication and aggregate the metrics in replication order.
pub fn run_replications(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let design = cfg.design()?;
    let roster = cfg.resolved_roster()?;
    let summaries = cfg.resolved_summaries(&design);
    let targets = target_names(cfg.periods, &summaries);
    let fixed = if cfg.fixed_table {
        Some(draw_table(cfg, &design, &mut stream_rng(cfg.seed, 0))?)
    } else {
        None
    };
    let reps: Vec<Result<Replication>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(cfg, &design, &roster, fixed.as_ref(), r))
        .collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (e, entry) in roster.iter().enumerate() {
        let errors: Vec<&String> = reps
            .iter()
            .filter_map(|r| r.results[e].as_ref().err())
            .collect();
        if let Some(first) = errors.first() {
            failures.push(FailureCount {
                estimator: entry.name.clone(),
                count: errors.len(),
                first_error: (*first).clone(),
            });
        }
        for (t, target) in targets.iter().enumerate() {
            let ok: Vec<(f64, Outcome)> = reps
                .iter()
                .filter_map(|r| r.results[e].as_ref().ok().map(|o| (r.truth[t], o[t])))
                .collect();
            rows.push(metrics(&entry.name, target, &ok, errors.len()));
        }
    }
    let equivalence_max_discrepancy = reps.iter().filter_map(|r| r.equivalence).reduce(f64::max);
    let mut notes = vec![
        format!("arm sizes {:?} by largest remainder", design.arm_sizes()),
        "zeta_variance is a variance; cluster-period sizes rounded with a floor of 2".into(),
    ];
    if cfg.calendar {
        notes.push("owte_cal_standin: equal-period average of arm-size weighted WATE_j(a)".into());
    }
    if cfg.large_cluster > 1.0 {
        notes.push(format!(
            "first cluster sizes multiplied by {}",
            cfg.large_cluster
        ));
    }
    Ok(SimReport {
        study: cfg.study,
        clusters: cfg.clusters,
        periods: cfg.periods,
        arm_sizes: design.arm_sizes().to_vec(),
        replications: cfg.replications,
        seed: cfg.seed,
        weight_scheme: cfg.weight_scheme,
        ci_level: cfg.ci_level,
        notes,
        estimators: roster.iter().map(|r| r.name.clone()).collect(),
        targets,
        rows,
        failures,
        equivalence_max_discrepancy,
    })
}

fn metrics(estimator: &str, target: &str, ok: &[(f64, Outcome)], failures: usize) -> MetricRow {
    let n = ok.len();
    let errors: Vec<f64> = ok.iter().map(|(t, o)| o.estimate - t).collect();
    let (bias, empirical_se) = mean_sd(&errors);
    let mean_abs_truth = sum(ok.iter().map(|(t, _)| t.abs())) / n as f64;
    let relative_bias = if mean_abs_truth > 0.0 {
        bias / mean_abs_truth
    } else if bias == 0.0 {
        0.0
    } else {
        f64::NAN
    };
    MetricRow {
        estimator: estimator.to_string(),
        target: target.to_string(),
        replications_used: n,
        failures,
        mean_truth: sum(ok.iter().map(|(t, _)| *t)) / n as f64,
        bias,
        relative_bias,
        empirical_se,
        empirical_se_mc_se: if n > 1 {
            empirical_se / (2.0 * (n as f64 - 1.0)).sqrt()
        } else {
            f64::NAN
        },
        mean_se: sum(ok.iter().map(|(_, o)| o.se)) / n as f64,
        coverage: ok.iter().filter(|(_, o)| o.covered).count() as f64 / n as f64,
    }
}
