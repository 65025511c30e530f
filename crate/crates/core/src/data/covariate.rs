use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Frame;
use crate::error::{Error, Result};

/// A covariate term that can enter an adjusted regression.
///
/// Indices refer to `Frame::x_names` / `Frame::c_names`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Covariate {
    /// Individual-level covariate `X_ijk`.
    X(usize),
    /// Cluster-period weighted mean `X̄_ij·`.
    XBar(usize),
    /// Cluster-period covariate `C_ij`.
    C(usize),
    /// Normalized cluster weight `π_ij·`.
    Pi,
    /// `π_ij·C_ij`.
    PiC(usize),
    /// Scaled total `I·π_ij·X̄_ij·`.
    XTilde(usize),
}

impl Covariate {
    pub fn is_individual(self) -> bool {
        matches!(self, Covariate::X(_))
    }

    /// Parse a selector such as `x_age`, `c_beds`, `xbar(x_age)`,
    /// `xtilde(x_age)`, `pi` or `pi*c_beds`.
    pub fn parse(s: &str, frame: &Frame) -> Result<Covariate> {
        let s = s.trim();
        let unknown = || Error::UnsupportedSpec(format!("unknown covariate `{s}`"));
        let x_index = |name: &str| {
            frame
                .x_names
                .iter()
                .position(|n| n == name.trim())
                .ok_or_else(unknown)
        };
        let c_index = |name: &str| {
            frame
                .c_names
                .iter()
                .position(|n| n == name.trim())
                .ok_or_else(unknown)
        };
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
        };
        if s == "pi" {
            Ok(Covariate::Pi)
        } else if let Some(c) = s.strip_prefix("pi*") {
            Ok(Covariate::PiC(c_index(c)?))
        } else if let Some(x) = inner("xbar") {
            Ok(Covariate::XBar(x_index(x)?))
        } else if let Some(x) = inner("xtilde") {
            Ok(Covariate::XTilde(x_index(x)?))
        } else if let Ok(k) = x_index(s) {
            Ok(Covariate::X(k))
        } else {
            Ok(Covariate::C(c_index(s)?))
        }
    }

    /// Selector string understood by [`Covariate::parse`].
    pub fn name(self, frame: &Frame) -> String {
        match self {
            Covariate::X(k) => frame.x_names[k].clone(),
            Covariate::XBar(k) => format!("xbar({})", frame.x_names[k]),
            Covariate::C(k) => frame.c_names[k].clone(),
            Covariate::Pi => "pi".into(),
            Covariate::PiC(k) => format!("pi*{}", frame.c_names[k]),
            Covariate::XTilde(k) => format!("xtilde({})", frame.x_names[k]),
        }
    }

    pub(crate) fn check(self, frame: &Frame) -> Result<()> {
        let ok = match self {
            Covariate::X(k) | Covariate::XBar(k) | Covariate::XTilde(k) => k < frame.px(),
            Covariate::C(k) | Covariate::PiC(k) => k < frame.pc(),
            Covariate::Pi => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnsupportedSpec(format!(
                "covariate index out of range: {self}"
            )))
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariate::X(k) => write!(f, "x[{k}]"),
            Covariate::XBar(k) => write!(f, "xbar[{k}]"),
            Covariate::C(k) => write!(f, "c[{k}]"),
            Covariate::Pi => f.write_str("pi"),
            Covariate::PiC(k) => write!(f, "pi*c[{k}]"),
            Covariate::XTilde(k) => write!(f, "xtilde[{k}]"),
        }
    }
}
