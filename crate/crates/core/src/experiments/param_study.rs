use serde::{Deserialize, Serialize};

use super::plain::{plain_estimate, PlainEstimate};
use super::rules::{BenchmarkRule, RuleSpec, TrainingSetup};
use crate::calibration::CalibReport;
use crate::error::{invalid, Result};
use crate::nested::{estimate, pilot, NestedConfig, NestedEstimate, PilotReport};
use crate::process::{GbmModel, GbmParams};
use crate::rng::Namespace;

/// Cost of exercising with a rule trained under a misspecified volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStudyConfig {
    /// The true model paths are simulated under.
    pub model: GbmParams,
    /// Misspecification `σ̂ - σ` for each row.
    pub offsets: Vec<f64>,
    pub training_paths: usize,
    pub training: TrainingSetup,
    pub pilot_trunks: usize,
    pub pilot_replications: usize,
    pub testing_trunks: usize,
    /// Paths for the plain estimate of `E[X_{τ^σ}]`.
    pub reference_paths: usize,
    pub seed: u64,
}

impl Default for ParamStudyConfig {
    fn default() -> Self {
        Self {
            model: GbmParams::benchmark(2, 90.0),
            offsets: vec![0.005, 0.01, 0.015, 0.02],
            training_paths: 100_000,
            training: TrainingSetup::default(),
            pilot_trunks: 100_000,
            pilot_replications: 100,
            testing_trunks: 200_000,
            reference_paths: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamStudyRow {
    pub offset: f64,
    pub sigma_hat: f64,
    pub delta_hat: f64,
    pub delta_stderr: f64,
    /// `E[X_{τ^σ}] - Δ̂`.
    pub misspecified_mean: f64,
    pub pilot: PilotReport,
    pub calibration: CalibReport,
    /// Run at the rounded optimal replication count.
    pub nested: NestedEstimate,
    /// Same trunk count with a single replication.
    pub single: NestedEstimate,
    /// `(Var·work at R=1) / (Var·work at R)`; `None` when both variances vanish.
    pub measured_speed_up: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamStudyReport {
    pub reference: PlainEstimate,
    pub rows: Vec<ParamStudyRow>,
}

pub fn param_uncertainty_study(cfg: &ParamStudyConfig) -> Result<ParamStudyReport> {
    if cfg.offsets.is_empty() {
        return Err(invalid("at least one volatility offset is required"));
    }
    let truth = cfg.model;
    let model = GbmModel::new(truth)?;
    let spec = RuleSpec::regression(cfg.training_paths);
    let correct = BenchmarkRule::build(&model, spec, &cfg.training)?;
    let reference = plain_estimate(&model, &correct, cfg.reference_paths, cfg.seed, Namespace::Testing(0))?;

    let mut rows = Vec::with_capacity(cfg.offsets.len());
    for (k, &offset) in cfg.offsets.iter().enumerate() {
        let k = k as u32;
        let sigma_hat = truth.sigma + offset;
        let belief = GbmModel::new(truth.with_sigma(sigma_hat))?;
        let misspecified = BenchmarkRule::build(&belief, spec, &cfg.training)?;
        let pilot = pilot(
            &model,
            &correct,
            &misspecified,
            cfg.pilot_trunks,
            cfg.pilot_replications,
            cfg.seed,
            Namespace::Pilot(k),
        )?;
        let calibration = pilot.report()?;
        let run = |r: usize, ns: Namespace| {
            estimate(
                &model,
                &correct,
                &misspecified,
                &NestedConfig::new(cfg.testing_trunks, r, cfg.seed).in_namespace(ns),
            )
        };
        let nested = run(calibration.r_rounded as usize, Namespace::Testing(1 + 2 * k))?;
        let single = run(1, Namespace::Testing(2 + 2 * k))?;
        let cost_r = nested.variance() * nested.work_units();
        let cost_1 = single.variance() * single.work_units();
        let measured_speed_up = (cost_r > 0.0).then(|| cost_1 / cost_r);
        rows.push(ParamStudyRow {
            offset,
            sigma_hat,
            delta_hat: nested.delta_hat,
            delta_stderr: nested.stderr,
            misspecified_mean: reference.mean - nested.delta_hat,
            pilot,
            calibration,
            nested,
            single,
            measured_speed_up,
        });
    }
    Ok(ParamStudyReport { reference, rows })
}
