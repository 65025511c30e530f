use std::path::{Path, PathBuf};

use serde::Deserialize;
use srcre_core::data::Frame;
use srcre_core::oracle::SuiteConfig;
use srcre_core::sim::SimConfig;
use srcre_core::{
    Adjustment, ColumnSchema, Covariate, EstimatorSpec, Level, SummarySpec, WeightScheme,
};

use crate::report::CliError;

/// Whole configuration file; each subcommand reads its own table.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub estimate: Option<EstimateConfig>,
    pub simulate: Option<SimConfig>,
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Individual records; relative paths resolve against the config file.
    pub records: PathBuf,
    #[serde(default)]
    pub cluster_covariates: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnSchema,
    #[serde(default = "default_schemes")]
    pub weight_schemes: Vec<WeightScheme>,
    pub estimators: Vec<EstimatorItem>,
    #[serde(default)]
    pub summaries: Vec<SummarySpec>,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Output directory when `--out` is not given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_schemes() -> Vec<WeightScheme> {
    vec![WeightScheme::UniformIndividual]
}

fn default_ci_level() -> f64 {
    0.95
}

/// Estimator entry; covariates use the selector syntax
/// (`x_age`, `c_beds`, `xbar(x_age)`, `xtilde(x_age)`, `pi`, `pi*c_beds`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorItem {
    #[serde(default)]
    pub name: Option<String>,
    pub level: Level,
    #[serde(default = "no_adjustment")]
    pub adjustment: Adjustment,
    #[serde(default)]
    pub covariates: Vec<String>,
}

fn no_adjustment() -> Adjustment {
    Adjustment::None
}

impl EstimatorItem {
    pub fn resolve(&self, frame: &Frame) -> Result<(String, EstimatorSpec), CliError> {
        let covariates = self
            .covariates
            .iter()
            .map(|s| Covariate::parse(s, frame))
            .collect::<srcre_core::Result<Vec<_>>>()?;
        let spec = EstimatorSpec {
            level: self.level,
            adjustment: self.adjustment,
            covariates,
        };
        spec.validate(frame)?;
        let name = self.name.clone().unwrap_or_else(|| spec.label(frame));
        Ok((name, spec))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tables: usize,
    /// Enumeration cap; larger supports fall back to Monte Carlo.
    pub cap: u64,
    /// Corrupt one covariance entry so the suite must fail.
    pub self_test: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            seed: s.seed,
            tables: s.tables,
            cap: s.cap,
            self_test: s.self_test,
        }
    }
}

impl From<&VerifyConfig> for SuiteConfig {
    fn from(v: &VerifyConfig) -> Self {
        SuiteConfig {
            seed: v.seed,
            tables: v.tables,
            cap: v.cap,
            self_test: v.self_test,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::validation("invalid_config", m));
        if self.estimators.is_empty() {
            return bad("estimate.estimators is empty");
        }
        if self.weight_schemes.is_empty() {
            return bad("estimate.weight_schemes is empty");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("estimate.ci_level must lie in (0, 1)");
        }
        Ok(())
    }

    /// Resolve relative data paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.records);
        if let Some(c) = self.cluster_covariates.as_mut() {
            fix(c);
        }
        if let Some(o) = self.out.as_mut() {
            fix(o);
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(
            "config_unreadable",
            &format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::validation("invalid_config", &e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(e) = cfg.estimate.as_mut() {
        e.rebase(base);
    }
    Ok(cfg)
}
