use serde::{Deserialize, Serialize};

use super::plain::{combine, plain_estimate, PlainEstimate};
use super::rules::{BenchmarkRule, RuleSpec, TrainingSetup};
use crate::calibration::{qcv_allocation, CalibReport};
use crate::error::{invalid, Result};
use crate::nested::{estimate, pilot, NestedConfig, NestedEstimate, PilotReport};
use crate::process::{GbmModel, GbmParams};
use crate::rng::Namespace;

/// Estimating `E[X_{τ^A}]` for an expensive rule `A` with a cheap rule `B`
/// as quasi-control variate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcvConfig {
    /// The true model paths are simulated under.
    pub model: GbmParams,
    pub rule_a: RuleSpec,
    pub rule_b: RuleSpec,
    pub training: TrainingSetup,
    /// Work units available to each of the three estimators.
    pub budget: f64,
    pub pilot_paths_a: usize,
    pub pilot_paths_b: usize,
    pub pilot_trunks: usize,
    pub pilot_replications: usize,
    /// Overrides the calibrated replication count.
    pub replications: Option<usize>,
    pub seed: u64,
}

impl Default for QcvConfig {
    fn default() -> Self {
        Self {
            model: GbmParams::benchmark(3, 90.0),
            rule_a: RuleSpec::lookahead(100_000, 3),
            rule_b: RuleSpec::regression(100_000),
            training: TrainingSetup::default(),
            budget: 2e7,
            pilot_paths_a: 5_000,
            pilot_paths_b: 100_000,
            pilot_trunks: 20_000,
            pilot_replications: 100,
            replications: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QcvMethod {
    Simple,
    QuasiControl,
    QuasiControlNested,
}

impl QcvMethod {
    pub fn name(self) -> &'static str {
        match self {
            QcvMethod::Simple => "simple",
            QcvMethod::QuasiControl => "qcv",
            QcvMethod::QuasiControlNested => "qcv_nested",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcvRow {
    pub method: QcvMethod,
    pub estimate: f64,
    pub variance: f64,
    /// Plain estimate of `E[X_{τ^B}]` and its variance (zero for the
    /// simple estimator).
    pub control_mean: f64,
    pub control_variance: f64,
    /// Paths spent on `E[X_{τ^B}]`.
    pub control_paths: u64,
    /// Paths on `E[X_{τ^A}]` (simple) or trunks on the difference.
    pub paths: u64,
    pub replications: u64,
    pub work_units: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcvReport {
    pub pilot_a: PlainEstimate,
    pub pilot_b: PlainEstimate,
    pub pilot: PilotReport,
    pub calibration: CalibReport,
    pub rows: Vec<QcvRow>,
    pub difference_single: NestedEstimate,
    pub difference_nested: NestedEstimate,
    /// Realized `(Var·work at R) / (Var·work at R=1)` of the difference
    /// estimators; `None` when both variances vanish.
    pub measured_gain: Option<f64>,
}

impl QcvReport {
    pub fn row(&self, method: QcvMethod) -> &QcvRow {
        self.rows.iter().find(|r| r.method == method).expect("all methods are reported")
    }
}

pub fn qcv_estimate(cfg: &QcvConfig) -> Result<QcvReport> {
    if !(cfg.budget > 0.0 && cfg.budget.is_finite()) {
        return Err(invalid("budget must be positive"));
    }
    let model = GbmModel::new(cfg.model)?;
    let rule_a = BenchmarkRule::build(&model, cfg.rule_a, &cfg.training)?;
    let rule_b = BenchmarkRule::build(&model, cfg.rule_b, &cfg.training)?;

    let pilot_a = plain_estimate(&model, &rule_a, cfg.pilot_paths_a, cfg.seed, Namespace::Pilot(0))?;
    let pilot_b = plain_estimate(&model, &rule_b, cfg.pilot_paths_b, cfg.seed, Namespace::Pilot(1))?;
    let pilot = pilot(
        &model,
        &rule_a,
        &rule_b,
        cfg.pilot_trunks,
        cfg.pilot_replications,
        cfg.seed,
        Namespace::Pilot(2),
    )?;
    let calibration = pilot.report()?;
    let (params, _) = pilot.calib_params()?;
    let (v_b, rho_b) = (pilot_b.sample_variance, pilot_b.cost_per_path());

    let simple_paths = ((cfg.budget / pilot_a.cost_per_path()) as usize).max(2);
    let simple = plain_estimate(&model, &rule_a, simple_paths, cfg.seed, Namespace::Testing(0))?;
    let mut rows = vec![QcvRow {
        method: QcvMethod::Simple,
        estimate: simple.mean,
        variance: simple.variance(),
        control_mean: 0.0,
        control_variance: 0.0,
        control_paths: 0,
        paths: simple_paths as u64,
        replications: 1,
        work_units: simple.work.units(),
        budget: cfg.budget,
    }];

    let r_nested = cfg.replications.map_or(calibration.r_rounded, |r| r as u64);
    let mut differences = Vec::with_capacity(2);
    for (method, r, ns) in [
        (QcvMethod::QuasiControl, 1u64, 1u32),
        (QcvMethod::QuasiControlNested, r_nested, 3),
    ] {
        let (nb, n) = qcv_allocation(v_b, rho_b, &params, r, cfg.budget)?;
        let (nb, n) = (nb.max(2), n.max(2));
        let control = plain_estimate(&model, &rule_b, nb as usize, cfg.seed, Namespace::Testing(ns))?;
        let diff = estimate(
            &model,
            &rule_a,
            &rule_b,
            &NestedConfig::new(n as usize, r as usize, cfg.seed).in_namespace(Namespace::Testing(ns + 1)),
        )?;
        let (value, variance) = combine(&[(control.mean, control.variance()), (diff.delta_hat, diff.variance())]);
        rows.push(QcvRow {
            method,
            estimate: value,
            variance,
            control_mean: control.mean,
            control_variance: control.variance(),
            control_paths: nb,
            paths: n,
            replications: r,
            work_units: control.work.units() + diff.work_units(),
            budget: cfg.budget,
        });
        differences.push(diff);
    }
    let difference_nested = differences.pop().expect("two runs");
    let difference_single = differences.pop().expect("two runs");
    let single = difference_single.variance() * difference_single.work_units();
    let nested = difference_nested.variance() * difference_nested.work_units();
    let measured_gain = (single > 0.0).then(|| nested / single);
    Ok(QcvReport {
        pilot_a,
        pilot_b,
        pilot,
        calibration,
        rows,
        difference_single,
        difference_nested,
        measured_gain,
    })
}
