//! Solver configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which equation/variable ordering to solve with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ReorderMode {
    /// Apply the suggested ordering.
    #[default]
    Auto,
    /// Solve in the given order; the suggestion is only reported.
    None,
    /// Swap equation `i` (1-based) with the last one.
    Rows(usize),
    /// Swap variable `j` (1-based) with the last one.
    Cols(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid reorder mode `{0}` (expected auto, none, rows=I or cols=J)")]
pub struct BadReorderMode(pub String);

impl FromStr for ReorderMode {
    type Err = BadReorderMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadReorderMode(s.to_string());
        let t = s.trim();
        match t {
            "auto" => return Ok(ReorderMode::Auto),
            "none" => return Ok(ReorderMode::None),
            _ => {}
        }
        let (key, value) = t.split_once('=').ok_or_else(bad)?;
        let index: usize = value.trim().parse().map_err(|_| bad())?;
        if index == 0 {
            return Err(bad());
        }
        match key.trim() {
            "rows" | "row" => Ok(ReorderMode::Rows(index)),
            "cols" | "col" | "columns" => Ok(ReorderMode::Cols(index)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ReorderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReorderMode::Auto => f.write_str("auto"),
            ReorderMode::None => f.write_str("none"),
            ReorderMode::Rows(i) => write!(f, "rows={i}"),
            ReorderMode::Cols(j) => write!(f, "cols={j}"),
        }
    }
}

impl TryFrom<String> for ReorderMode {
    type Error = BadReorderMode;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ReorderMode> for String {
    fn from(m: ReorderMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Pitch of the starting-point mesh over the leading coordinates.
    pub stepx: f64,
    /// Distance between slices of the running variable.
    pub stepz: f64,
    /// Curve-following increment (magnitude).
    pub step: f64,
    /// Smallest increment still tried before a branch is declared ended.
    pub thresh: f64,
    /// Curve-point accuracy.
    pub acc1: f64,
    /// Solution accuracy.
    pub acc2: f64,
    pub max_iter: usize,
    /// Newton gives up once `max |x_i|` exceeds this; default
    /// `1e8 * (1 + box norm)`.
    pub divergence_bound: Option<f64>,
    /// Solution and starting-point dedup radius; default `10 * acc2`.
    pub tol_dedup: Option<f64>,
    /// Radius for "already visited" checks; default `step`.
    pub tol_belongs: Option<f64>,
    pub boundary_clamp: bool,
    pub reorder: ReorderMode,
    pub max_bisections: usize,
    /// Worker threads for the per-slice mesh Newton solves.
    pub threads: usize,
    /// Keep every accepted curve point in the report.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            stepx: 1.0,
            stepz: 1.0,
            step: 0.1,
            thresh: 0.1,
            acc1: 1e-10,
            acc2: 1e-4,
            max_iter: 100,
            divergence_bound: None,
            tol_dedup: None,
            tol_belongs: None,
            boundary_clamp: true,
            reorder: ReorderMode::Auto,
            max_bisections: 200,
            threads: 1,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl SolverConfig {
    pub fn with_steps(stepx: f64, stepz: f64, step: f64, thresh: f64) -> Self {
        SolverConfig {
            stepx,
            stepz,
            step,
            thresh,
            ..SolverConfig::default()
        }
    }

    pub fn tol_dedup(&self) -> f64 {
        self.tol_dedup.unwrap_or(10.0 * self.acc2)
    }

    pub fn tol_belongs(&self) -> f64 {
        self.tol_belongs.unwrap_or(self.step.abs())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("stepx", self.stepx)?;
        positive("stepz", self.stepz)?;
        positive("step", self.step.abs())?;
        positive("thresh", self.thresh)?;
        positive("acc1", self.acc1)?;
        positive("acc2", self.acc2)?;
        if self.acc1 > self.acc2 {
            return Err(ConfigError(format!(
                "acc1 ({}) must not exceed acc2 ({})",
                self.acc1, self.acc2
            )));
        }
        if self.thresh > self.step.abs() {
            return Err(ConfigError(format!(
                "thresh ({}) must not exceed |step| ({})",
                self.thresh,
                self.step.abs()
            )));
        }
        if self.max_iter == 0 {
            return Err(ConfigError("max_iter must be at least 1".into()));
        }
        if let Some(b) = self.divergence_bound {
            positive("divergence_bound", b)?;
        }
        if let Some(t) = self.tol_dedup {
            positive("tol_dedup", t)?;
        }
        if let Some(t) = self.tol_belongs {
            positive("tol_belongs", t)?;
        }
        if self.threads == 0 {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        Ok(())
    }
}
