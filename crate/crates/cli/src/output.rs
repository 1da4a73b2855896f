//! CSV tables, JSON summaries and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Column name and its meaning, shown in `--help` and the format docs.
pub type Column = (&'static str, &'static str);

pub const PILOT_COLUMNS: &[Column] = &[
    ("v1", "variance of the conditional mean of the increment given the first stop"),
    ("v2", "mean conditional variance of the increment after the first stop"),
    ("rho1", "work units per trunk (simulation up to the first stop)"),
    ("rho2", "work units per replication after the first stop"),
    ("p_differ", "fraction of trunks on which the two rules disagree"),
    ("degenerate", "true if the rules never disagreed on the pilot sample"),
    ("floored", "true if a zero estimate was lifted to a tiny positive floor"),
    ("r_star", "continuous optimal replication count"),
    ("r_rounded", "replication count used in practice (nearest integer, at least 1)"),
    ("gamma_star", "predicted variance-cost ratio against one replication"),
    ("speed_up", "1 / gamma_star"),
    ("condition_holds", "true if replicating beats a single replication"),
    ("trunks", "pilot trunks"),
    ("replications", "pilot replications per trunk"),
    ("exact_delta", "tree models only: exact expected difference"),
    ("exact_v1", "tree models only: exact v1"),
    ("exact_v2", "tree models only: exact v2"),
];

pub const ESTIMATE_COLUMNS: &[Column] = &[
    ("replications", "replications per trunk"),
    ("trunks", "number of trunks"),
    ("delta_hat", "estimate of E[X at rule A] - E[X at rule B]"),
    ("stderr", "standard error of delta_hat"),
    ("v1_hat", "estimated v1 (empty with one replication)"),
    ("v2_hat", "estimated v2 (empty with one replication)"),
    ("p_differ", "fraction of trunks on which the rules disagree"),
    ("work_units", "total work spent"),
    ("variance_times_work", "stderr^2 * work_units, lower is better"),
];

pub const PARAM_STUDY_COLUMNS: &[Column] = &[
    ("offset", "volatility misspecification (believed minus true)"),
    ("sigma_hat", "volatility the second rule was trained under"),
    ("delta_hat", "estimated loss from exercising with the misspecified rule"),
    ("delta_stderr", "standard error of delta_hat"),
    ("reference_mean", "plain estimate of the value under the correctly trained rule"),
    ("reference_stderr", "standard error of reference_mean"),
    ("misspecified_mean", "reference_mean - delta_hat"),
    ("p_differ", "pilot fraction of paths on which the two rules disagree"),
    ("rho1", "pilot work units per trunk"),
    ("rho2", "pilot work units per replication"),
    ("v1", "pilot v1"),
    ("v2", "pilot v2"),
    ("r_star", "continuous optimal replication count"),
    ("r_rounded", "replication count used for delta_hat"),
    ("gamma_star", "predicted variance-cost ratio"),
    ("predicted_speed_up", "1 / gamma_star"),
    ("measured_speed_up", "realized variance*work at one replication over that at r_rounded"),
    ("work_units", "work spent on delta_hat"),
];

pub const QCV_COLUMNS: &[Column] = &[
    ("method", "simple, qcv (one replication) or qcv_nested (calibrated replications)"),
    ("estimate", "estimate of E[X at rule A]"),
    ("variance", "estimator variance"),
    ("stderr", "sqrt(variance)"),
    ("control_mean", "plain estimate of E[X at rule B] (0 for simple)"),
    ("control_paths", "paths spent on the control (0 for simple)"),
    ("paths", "paths on rule A (simple) or trunks on the difference"),
    ("replications", "replications per trunk"),
    ("work_units", "work spent"),
    ("budget", "configured work budget"),
    ("budget_ratio", "work_units / budget"),
];

pub const MULTILEVEL_COLUMNS: &[Column] = &[
    ("method", "simple, multilevel or multilevel_nested"),
    ("level", "ladder level of the row, or total for the combined estimate"),
    ("paths", "paths (level 0, simple) or trunks (increments)"),
    ("replications", "replications per trunk"),
    ("estimate", "level mean or increment, or the combined estimate"),
    ("variance", "variance of the row's estimate"),
    ("work_units", "work spent"),
    ("budget", "configured work budget"),
];

pub const ORACLE_COLUMNS: &[Column] = &[
    ("replications", "replications per trunk"),
    ("trunks", "number of trunks"),
    ("delta_exact", "exact expected difference by enumeration"),
    ("delta_hat", "nested estimate"),
    ("stderr", "standard error of delta_hat"),
    ("z", "(delta_hat - delta_exact) / stderr"),
    ("v1_exact", "exact v1"),
    ("v2_exact", "exact v2"),
    ("pass", "true if |z| < 4"),
];

pub const VPROFILE_COLUMNS: &[Column] = &[
    ("r", "replication count (grid point)"),
    ("variance_cost", "(rho1 + rho2 r)(v1 + v2 / r)"),
    ("relative", "variance_cost / variance_cost at the optimum"),
];

pub fn columns_help(columns: &[Column]) -> String {
    let width = columns.iter().map(|c| c.0.len()).max().unwrap_or(0);
    let mut out = String::from("CSV columns:\n");
    for (name, meaning) in columns {
        out.push_str(&format!("  {name:<width$}  {meaning}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [Column],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [Column]) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.0))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_digest: String,
    pub seed: u64,
    pub version: &'static str,
    pub started_at_unix: f64,
    pub finished_at_unix: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
