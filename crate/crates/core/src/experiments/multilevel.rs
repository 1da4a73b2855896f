use serde::{Deserialize, Serialize};

use super::plain::{combine, plain_estimate, PlainEstimate};
use super::rules::{BenchmarkRule, RuleSpec, TrainingSetup};
use crate::calibration::{ml_allocation, CalibReport};
use crate::error::{invalid, Result};
use crate::nested::{estimate, pilot, NestedConfig, PilotReport};
use crate::process::{GbmModel, GbmParams};
use crate::rng::Namespace;

/// Telescoping estimate of `E[X_{τ_L}]` over a ladder of increasingly
/// accurate and expensive rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelConfig {
    /// The true model paths are simulated under.
    pub model: GbmParams,
    /// Rules from cheapest to finest.
    pub ladder: Vec<RuleSpec>,
    pub training: TrainingSetup,
    pub budget: f64,
    pub pilot_base_paths: usize,
    pub pilot_fine_paths: usize,
    pub pilot_trunks: usize,
    pub pilot_replications: usize,
    pub seed: u64,
}

impl Default for MultilevelConfig {
    fn default() -> Self {
        Self {
            model: GbmParams::benchmark(5, 90.0),
            ladder: vec![
                RuleSpec::regression(1_000),
                RuleSpec::lookahead(10_000, 2),
                RuleSpec::lookahead(100_000, 3),
            ],
            training: TrainingSetup::default(),
            budget: 1.5e8,
            pilot_base_paths: 20_000,
            pilot_fine_paths: 1_000,
            pilot_trunks: 5_000,
            pilot_replications: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultilevelMethod {
    Simple,
    Multilevel,
    MultilevelNested,
}

impl MultilevelMethod {
    pub fn name(self) -> &'static str {
        match self {
            MultilevelMethod::Simple => "simple",
            MultilevelMethod::Multilevel => "multilevel",
            MultilevelMethod::MultilevelNested => "multilevel_nested",
        }
    }
}

/// Pilot statistics of one increment `E[X_{τ_i} - X_{τ_{i-1}}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPilot {
    pub level: usize,
    pub pilot: PilotReport,
    pub calibration: CalibReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRun {
    pub level: usize,
    pub paths: u64,
    pub replications: u64,
    pub estimate: f64,
    pub variance: f64,
    pub work_units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultilevelRow {
    pub method: MultilevelMethod,
    pub estimate: f64,
    pub variance: f64,
    pub work_units: f64,
    pub budget: f64,
    pub levels: Vec<LevelRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultilevelReport {
    pub pilot_base: PlainEstimate,
    pub pilot_fine: PlainEstimate,
    pub level_pilots: Vec<LevelPilot>,
    pub rows: Vec<MultilevelRow>,
    /// `|multilevel_nested - simple| / sqrt(Var_1 + Var_2)`.
    pub telescoping_z: f64,
}

impl MultilevelReport {
    pub fn row(&self, method: MultilevelMethod) -> &MultilevelRow {
        self.rows.iter().find(|r| r.method == method).expect("all methods are reported")
    }
}

pub fn multilevel_estimate(cfg: &MultilevelConfig) -> Result<MultilevelReport> {
    if cfg.ladder.is_empty() {
        return Err(invalid("the ladder needs at least one rule"));
    }
    if !(cfg.budget > 0.0 && cfg.budget.is_finite()) {
        return Err(invalid("budget must be positive"));
    }
    let model = GbmModel::new(cfg.model)?;
    let rules = cfg
        .ladder
        .iter()
        .map(|spec| BenchmarkRule::build(&model, *spec, &cfg.training))
        .collect::<Result<Vec<_>>>()?;
    let finest = rules.last().expect("ladder is nonempty");
    let top = rules.len() - 1;

    let pilot_base = plain_estimate(&model, &rules[0], cfg.pilot_base_paths, cfg.seed, Namespace::Pilot(0))?;
    let pilot_fine = plain_estimate(&model, finest, cfg.pilot_fine_paths, cfg.seed, Namespace::Pilot(1))?;
    let mut level_pilots = Vec::with_capacity(top);
    for i in 1..rules.len() {
        let pilot = pilot(
            &model,
            &rules[i],
            &rules[i - 1],
            cfg.pilot_trunks,
            cfg.pilot_replications,
            cfg.seed,
            Namespace::Pilot(1 + i as u32),
        )?;
        let calibration = pilot.report()?;
        level_pilots.push(LevelPilot { level: i, pilot, calibration });
    }

    let simple_paths = ((cfg.budget / pilot_fine.cost_per_path()) as usize).max(2);
    let simple = plain_estimate(&model, finest, simple_paths, cfg.seed, Namespace::Testing(0))?;
    let mut rows = vec![MultilevelRow {
        method: MultilevelMethod::Simple,
        estimate: simple.mean,
        variance: simple.variance(),
        work_units: simple.work.units(),
        budget: cfg.budget,
        levels: vec![LevelRun {
            level: top,
            paths: simple_paths as u64,
            replications: 1,
            estimate: simple.mean,
            variance: simple.variance(),
            work_units: simple.work.units(),
        }],
    }];

    for (method, offset) in [(MultilevelMethod::Multilevel, 10u32), (MultilevelMethod::MultilevelNested, 20)] {
        let replications: Vec<u64> = level_pilots
            .iter()
            .map(|lp| match method {
                MultilevelMethod::MultilevelNested => lp.calibration.r_rounded,
                _ => 1,
            })
            .collect();
        let mut stats = vec![(pilot_base.sample_variance, pilot_base.cost_per_path())];
        for (lp, &r) in level_pilots.iter().zip(&replications) {
            let (p, _) = lp.pilot.calib_params()?;
            stats.push((p.variance(r as f64), p.cost(r as f64)));
        }
        let counts = ml_allocation(&stats, cfg.budget)?;
        let base = plain_estimate(
            &model,
            &rules[0],
            (counts[0] as usize).max(2),
            cfg.seed,
            Namespace::Testing(offset),
        )?;
        let mut levels = vec![LevelRun {
            level: 0,
            paths: base.paths as u64,
            replications: 1,
            estimate: base.mean,
            variance: base.variance(),
            work_units: base.work.units(),
        }];
        for i in 1..rules.len() {
            let n = (counts[i] as usize).max(2);
            let r = replications[i - 1] as usize;
            let est = estimate(
                &model,
                &rules[i],
                &rules[i - 1],
                &NestedConfig::new(n, r, cfg.seed).in_namespace(Namespace::Testing(offset + i as u32)),
            )?;
            levels.push(LevelRun {
                level: i,
                paths: n as u64,
                replications: r as u64,
                estimate: est.delta_hat,
                variance: est.variance(),
                work_units: est.work_units(),
            });
        }
        let parts: Vec<(f64, f64)> = levels.iter().map(|l| (l.estimate, l.variance)).collect();
        let (value, variance) = combine(&parts);
        rows.push(MultilevelRow {
            method,
            estimate: value,
            variance,
            work_units: levels.iter().map(|l| l.work_units).sum(),
            budget: cfg.budget,
            levels,
        });
    }

    let nested = &rows[2];
    let telescoping_z = (nested.estimate - simple.mean).abs() / (nested.variance + simple.variance()).sqrt();
    Ok(MultilevelReport { pilot_base, pilot_fine, level_pilots, rows, telescoping_z })
}
