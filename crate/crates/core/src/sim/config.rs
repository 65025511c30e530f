use serde::{Deserialize, Serialize};

use crate::data::{Covariate, Frame, WeightScheme};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimands::SummarySpec;
use crate::estimators::{Adjustment, EstimatorSpec, Level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Informative covariates, `J = 2`.
    #[serde(rename = "study_i")]
    StudyI,
    /// Covariates generated but unrelated to the outcomes, `J = 2`.
    #[serde(rename = "study_ii")]
    StudyII,
    /// Additive model driven by [`CustomDgp`], any `J`.
    Custom,
}

/// Additive potential-outcome model
/// `f_a(i, j, X) = level·i/I + size_effect·N_ij·I/N_j + effects[a]·1(a ≤ j) + slope·X^c + ζ_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomDgp {
    pub level: f64,
    pub size_effect: f64,
    /// Effect of having adopted at period `a`, one entry per finite arm.
    pub effects: Vec<f64>,
    pub slope: f64,
}

impl Default for CustomDgp {
    fn default() -> Self {
        Self {
            level: 1.0,
            size_effect: 0.0,
            effects: Vec::new(),
            slope: 0.0,
        }
    }
}

/// A roster entry: display name plus estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RosterEntry {
    pub name: String,
    pub spec: EstimatorSpec,
}

/// Configuration form of a roster entry; covariates use the term syntax
/// (`x`, `xbar(x)`, `xtilde(x)`, `pi`) over the simulated column `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterItem {
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

/// Column layout shared by every simulated frame.
pub(crate) fn template_frame(periods: usize) -> Frame {
    Frame {
        periods,
        period_labels: (1..=periods as i64).collect(),
        x_names: vec!["x".into()],
        c_names: Vec::new(),
        clusters: Vec::new(),
    }
}

impl RosterItem {
    pub fn resolve(&self, periods: usize) -> Result<RosterEntry> {
        let frame = template_frame(periods);
        let covariates = self
            .covariates
            .iter()
            .map(|s| Covariate::parse(s, &frame))
            .collect::<Result<Vec<_>>>()?;
        let spec = EstimatorSpec {
            level: self.level,
            adjustment: self.adjustment,
            covariates,
        };
        spec.validate(&frame)?;
        Ok(RosterEntry {
            name: self.name.clone().unwrap_or_else(|| spec.label(&frame)),
            spec,
        })
    }
}

impl RosterEntry {
    pub fn new(name: &str, spec: EstimatorSpec) -> Self {
        Self {
            name: name.to_string(),
            spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub study: Study,
    pub custom: CustomDgp,
    pub clusters: usize,
    pub periods: usize,
    /// Arm fractions `q(a)`, `J + 1` entries; equal split when empty.
    pub arm_fractions: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Cluster-period sizes are `U(size_total/(jI)·(1 − spread), size_total/(jI)·(1 + spread))`.
    pub size_total: f64,
    pub size_spread: f64,
    /// Size multiplier of the first cluster; 1 leaves sizes unchanged.
    pub large_cluster: f64,
    pub noise_sd: f64,
    /// Variance of the cluster-period effect `ζ_ij`.
    pub zeta_variance: f64,
    pub weight_scheme: WeightScheme,
    /// Study default when empty.
    pub roster: Vec<RosterItem>,
    pub summaries: Vec<SummarySpec>,
    /// Add the calendar-time stand-in to the summaries.
    pub calendar: bool,
    pub ci_level: f64,
    /// Keep one potential-outcome table and redraw only the assignment.
    pub fixed_table: bool,
    pub df_correction: bool,
    pub equivalence_check: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::study(Study::StudyI)
    }
}

impl SimConfig {
    pub fn study(study: Study) -> Self {
        Self {
            study,
            custom: CustomDgp::default(),
            clusters: 260,
            periods: 2,
            arm_fractions: Vec::new(),
            replications: 1000,
            seed: 1,
            size_total: 5200.0,
            size_spread: 0.4,
            large_cluster: 1.0,
            noise_sd: 1.0,
            zeta_variance: 0.2,
            weight_scheme: WeightScheme::UniformIndividual,
            roster: Vec::new(),
            summaries: vec![SummarySpec::OwteSim, SummarySpec::OawteSim],
            calendar: true,
            ci_level: 0.95,
            fixed_table: false,
            df_correction: false,
            equivalence_check: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.periods == 0 {
            return bad("periods must be at least 1".into());
        }
        if matches!(self.study, Study::StudyI | Study::StudyII) && self.periods != 2 {
            return bad(format!(
                "{:?} is defined for 2 periods, got {}",
                self.study, self.periods
            ));
        }
        if self.study == Study::Custom && self.custom.effects.len() != self.periods {
            return bad(format!(
                "custom effects need {} entries, got {}",
                self.periods,
                self.custom.effects.len()
            ));
        }
        if self.weight_scheme == WeightScheme::CustomColumn {
            return bad("simulated data carry no weight column".into());
        }
        if !(self.size_total > 0.0)
            || !(0.0..1.0).contains(&self.size_spread)
            || !(self.large_cluster >= 1.0)
        {
            return bad(
                "size law needs size_total > 0, 0 <= spread < 1, large_cluster >= 1".into(),
            );
        }
        if !(self.noise_sd >= 0.0) || !(self.zeta_variance >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            ));
        }
        self.design()?;
        let mut names = std::collections::HashSet::new();
        for e in self.resolved_roster()? {
            if !names.insert(e.name.clone()) {
                return bad(format!("roster name `{}` repeated", e.name));
            }
        }
        Ok(())
    }

    /// Arm sizes by largest remainder.
    pub fn design(&self) -> Result<DesignSpec> {
        let fractions = if self.arm_fractions.is_empty() {
            vec![1.0 / (self.periods + 1) as f64; self.periods + 1]
        } else {
            self.arm_fractions.clone()
        };
        DesignSpec::from_fractions(self.clusters, self.periods, &fractions)
    }

    pub fn resolved_roster(&self) -> Result<Vec<RosterEntry>> {
        if self.roster.is_empty() {
            Ok(default_roster(self.study))
        } else {
            self.roster
                .iter()
                .map(|r| r.resolve(self.periods))
                .collect()
        }
    }

    pub fn resolved_summaries(&self, design: &DesignSpec) -> Vec<(String, SummarySpec)> {
        let mut out: Vec<(String, SummarySpec)> = self
            .summaries
            .iter()
            .map(|s| (s.name().to_string(), s.clone()))
            .collect();
        if self.calendar {
            out.push((
                "owte_cal_standin".into(),
                SummarySpec::calendar_average(design),
            ));
        }
        out
    }
}

/// Nine estimators for the first study; the second drops the two that are
/// numerically identical to others.
pub fn default_roster(study: Study) -> Vec<RosterEntry> {
    let x = Covariate::X(0);
    let xbar = Covariate::XBar(0);
    let all = vec![
        RosterEntry::new("I", EstimatorSpec::unadjusted(Level::Individual)),
        RosterEntry::new("I_adj", EstimatorSpec::adjusted(Level::Individual, vec![x])),
        RosterEntry::new(
            "I_adj[C]",
            EstimatorSpec::adjusted(Level::Individual, vec![xbar]),
        ),
        RosterEntry::new("I_ancova", EstimatorSpec::ancova(vec![x])),
        RosterEntry::new("A", EstimatorSpec::unadjusted(Level::Average)),
        RosterEntry::new("A_adj", EstimatorSpec::adjusted(Level::Average, vec![xbar])),
        RosterEntry::new("T", EstimatorSpec::unadjusted(Level::Total)),
        RosterEntry::new(
            "T_adj[pi]",
            EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi]),
        ),
        RosterEntry::new(
            "T_adj[pi,piC]",
            EstimatorSpec::adjusted(Level::Total, vec![Covariate::Pi, Covariate::XTilde(0)]),
        ),
    ];
    match study {
        Study::StudyII => all
            .into_iter()
            .filter(|e| e.name != "I_adj[C]" && e.name != "A")
            .collect(),
        _ => all,
    }
}
