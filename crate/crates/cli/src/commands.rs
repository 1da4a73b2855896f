//! One function per subcommand, each producing a table and a JSON result.

use ncmc_core::calibration::{optimal_R, v_profile, CalibParams, CalibReport};
use ncmc_core::experiments::{
    multilevel_estimate, param_uncertainty_study, qcv_estimate, MultilevelConfig, ParamStudyConfig, QcvConfig,
    RuleSpec,
};
use ncmc_core::nested::{estimate, pilot, NestedConfig, NestedEstimate, PilotReport};
use ncmc_core::oracle::{exact_components, ExactComponents};
use ncmc_core::process::{Process, TreeModel};
use ncmc_core::rng::Namespace;
use ncmc_core::stopping::StoppingRule;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, ConfigError};
use crate::output::{
    Cell, Table, ESTIMATE_COLUMNS, MULTILEVEL_COLUMNS, ORACLE_COLUMNS, PARAM_STUDY_COLUMNS, PILOT_COLUMNS,
    QCV_COLUMNS, VPROFILE_COLUMNS,
};
use crate::setup::{gbm_params, rule_pair, training_setup, tree_model, tree_rule, Pair};
use crate::Failure;

pub struct Outcome {
    pub table: Table,
    pub result: Value,
    /// Set when a built-in check failed; outputs are still written.
    pub check_failure: Option<String>,
}

impl Outcome {
    fn ok(table: Table, result: impl Serialize) -> Result<Self, Failure> {
        Ok(Self { table, result: to_json(result)?, check_failure: None })
    }
}

fn to_json(v: impl Serialize) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Runtime(e.into()))
}

fn exact_for(model: &TreeModel, cfg: &Config) -> Result<ExactComponents, Failure> {
    let a = tree_rule(cfg, 'a')?;
    let b = tree_rule(cfg, 'b')?;
    exact_components(model, &a, &b).map_err(Failure::runtime)
}

fn run_pilot<P, A, B>(model: &P, a: &A, b: &B, cfg: &Config, seed: u64) -> Result<(PilotReport, CalibReport, bool), Failure>
where
    P: Process,
    A: StoppingRule<P>,
    B: StoppingRule<P>,
{
    let trunks = cfg.get_or("pilot.trunks", 20_000usize)?;
    let reps = cfg.get_or("pilot.replications", 20usize)?;
    let report = pilot(model, a, b, trunks, reps, seed, Namespace::Pilot(0)).map_err(Failure::runtime)?;
    let calib = report.report().map_err(Failure::runtime)?;
    let floored = report.calib_params().map_err(Failure::runtime)?.1;
    Ok((report, calib, floored))
}

pub fn pilot_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let pair = rule_pair(cfg)?;
    let ((report, calib, floored), exact) = match &pair {
        Pair::Gbm { model, a, b } => (run_pilot(model, a, b, cfg, seed)?, None),
        Pair::Tree { model, a, b } => (run_pilot(model, a, b, cfg, seed)?, Some(exact_for(model, cfg)?)),
    };
    println!(
        "v1={:.6} v2={:.6} rho1={:.6} rho2={:.6} p_differ={:.6}",
        report.v1, report.v2, report.rho1, report.rho2, report.p_differ
    );
    if floored && !report.degenerate {
        println!("warning: a variance or cost estimate was zero and was floored; R* is unreliable");
    }
    if let Some(e) = &exact {
        println!("exact: delta={:.6} v1={:.6} v2={:.6}", e.delta, e.v1, e.v2);
    }
    println!(
        "R*={:.4} R={} gamma*={:.6} speed-up={:.4}{}",
        calib.r_star,
        calib.r_rounded,
        calib.gamma_star,
        calib.speed_up(),
        if report.degenerate { " (degenerate: the rules never disagreed)" } else { "" }
    );
    let mut table = Table::new(PILOT_COLUMNS);
    table.push(vec![
        report.v1.into(),
        report.v2.into(),
        report.rho1.into(),
        report.rho2.into(),
        report.p_differ.into(),
        report.degenerate.into(),
        floored.into(),
        calib.r_star.into(),
        calib.r_rounded.into(),
        calib.gamma_star.into(),
        calib.speed_up().into(),
        calib.condition_holds.into(),
        report.trunks.into(),
        report.replications.into(),
        exact.map(|e| e.delta).into(),
        exact.map(|e| e.v1).into(),
        exact.map(|e| e.v2).into(),
    ]);
    Outcome::ok(table, json!({ "pilot": report, "calibration": calib, "floored": floored, "exact": exact }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Replications {
    Fixed(usize),
    Calibrated,
}

fn replication_list(cfg: &Config) -> Result<Vec<Replications>, ConfigError> {
    let raw = cfg.raw("estimate.replications").unwrap_or("auto");
    raw.split(',')
        .map(|t| match t.trim() {
            "auto" => Ok(Replications::Calibrated),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .map(Replications::Fixed)
                .ok_or_else(|| ConfigError(format!("bad item `{n}` in `estimate.replications`"))),
        })
        .collect()
}

fn run_estimates<P, A, B>(model: &P, a: &A, b: &B, cfg: &Config, seed: u64) -> Result<Outcome, Failure>
where
    P: Process,
    A: StoppingRule<P>,
    B: StoppingRule<P>,
{
    let list = replication_list(cfg)?;
    let budget: Option<f64> = cfg.get("estimate.budget")?;
    let needs_pilot = budget.is_some() || list.contains(&Replications::Calibrated);
    let pilot = if needs_pilot { Some(run_pilot(model, a, b, cfg, seed)?) } else { None };
    let default_trunks = cfg.get_or("estimate.trunks", 100_000usize)?;
    let mut table = Table::new(ESTIMATE_COLUMNS);
    let mut runs: Vec<NestedEstimate> = Vec::new();
    for (i, item) in list.iter().enumerate() {
        let r = match item {
            Replications::Fixed(r) => *r,
            Replications::Calibrated => {
                let (report, calib, floored) = pilot.as_ref().expect("pilot ran");
                if *floored && !report.degenerate {
                    return Err(Failure::runtime(anyhow::anyhow!(
                        "the pilot estimated a zero variance component, so R* is not meaningful; \
                         raise pilot.trunks or pilot.replications"
                    )));
                }
                calib.r_rounded as usize
            }
        };
        let trunks = match (budget, &pilot) {
            (Some(budget), Some((report, _, _))) => {
                let (params, _) = report.calib_params().map_err(Failure::runtime)?;
                ((budget / params.cost(r as f64)) as usize).max(2)
            }
            _ => default_trunks,
        };
        let est = estimate(
            model,
            a,
            b,
            &NestedConfig::new(trunks, r, seed).in_namespace(Namespace::Testing(i as u32)),
        )
        .map_err(Failure::runtime)?;
        println!("R={r} N={trunks}: delta={:.6} stderr={:.6}", est.delta_hat, est.stderr);
        table.push(vec![
            r.into(),
            trunks.into(),
            est.delta_hat.into(),
            est.stderr.into(),
            est.v1_hat.into(),
            est.v2_hat.into(),
            est.p_differ.into(),
            est.work_units().into(),
            (est.variance() * est.work_units()).into(),
        ]);
        runs.push(est);
    }
    let pilot_json = pilot.map(|(p, c, f)| json!({ "pilot": p, "calibration": c, "floored": f }));
    Outcome::ok(table, json!({ "pilot": pilot_json, "runs": runs, "budget": budget }))
}

pub fn estimate_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    match rule_pair(cfg)? {
        Pair::Gbm { model, a, b } => run_estimates(&model, &a, &b, cfg, seed),
        Pair::Tree { model, a, b } => run_estimates(&model, &a, &b, cfg, seed),
    }
}

pub fn oracle_check_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    if cfg.raw("model.kind") != Some("tree") {
        return Err(ConfigError("oracle-check needs `model.kind=tree`".into()).into());
    }
    let model = tree_model(cfg)?;
    let a = tree_rule(cfg, 'a')?;
    let b = tree_rule(cfg, 'b')?;
    let exact = exact_components(&model, &a, &b).map_err(Failure::runtime)?;
    let trunks = cfg.get_or("oracle.trunks", 100_000usize)?;
    let reps = cfg.list::<usize>("oracle.replications")?.unwrap_or_else(|| vec![1, 5, 20]);
    let mut table = Table::new(ORACLE_COLUMNS);
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for (i, &r) in reps.iter().enumerate() {
        let est = estimate(
            &model,
            &a,
            &b,
            &NestedConfig::new(trunks, r, seed).in_namespace(Namespace::Testing(i as u32)),
        )
        .map_err(Failure::runtime)?;
        let gap = est.delta_hat - exact.delta;
        let z = if gap == 0.0 { 0.0 } else { gap / est.stderr };
        let pass = z.abs() < 4.0;
        println!(
            "R={r}: delta_hat={:.6} exact={:.6} stderr={:.6} z={:.3} {}",
            est.delta_hat,
            exact.delta,
            est.stderr,
            z,
            if pass { "ok" } else { "FAIL" }
        );
        if !pass {
            failures.push(format!("R={r}: |z| = {:.3} >= 4", z.abs()));
        }
        table.push(vec![
            r.into(),
            trunks.into(),
            exact.delta.into(),
            est.delta_hat.into(),
            est.stderr.into(),
            z.into(),
            exact.v1.into(),
            exact.v2.into(),
            pass.into(),
        ]);
        runs.push(est);
    }
    Ok(Outcome {
        table,
        result: to_json(json!({ "exact": exact, "runs": runs }))?,
        check_failure: (!failures.is_empty()).then(|| failures.join("; ")),
    })
}

fn pilot_settings(cfg: &Config, trunks: usize, reps: usize) -> Result<(usize, usize), ConfigError> {
    Ok((cfg.get_or("pilot.trunks", trunks)?, cfg.get_or("pilot.replications", reps)?))
}

pub fn param_study_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let d = ParamStudyConfig::default();
    let (pilot_trunks, pilot_replications) = pilot_settings(cfg, d.pilot_trunks, d.pilot_replications)?;
    let study = ParamStudyConfig {
        model: gbm_params(cfg, d.model.d)?,
        offsets: cfg.list("study.offsets")?.unwrap_or(d.offsets),
        training_paths: cfg.get_or("study.training_paths", d.training_paths)?,
        training: training_setup(cfg)?,
        pilot_trunks,
        pilot_replications,
        testing_trunks: cfg.get_or("study.testing_trunks", d.testing_trunks)?,
        reference_paths: cfg.get_or("study.reference_paths", d.reference_paths)?,
        seed,
    };
    let report = param_uncertainty_study(&study).map_err(Failure::runtime)?;
    println!("E[X] under the correctly trained rule: {:.6} ± {:.6}", report.reference.mean, report.reference.stderr);
    let mut table = Table::new(PARAM_STUDY_COLUMNS);
    for row in &report.rows {
        println!(
            "offset {:+.4}: delta={:.6} ± {:.6} P={:.4} R*={:.1} speed-up={:.1} measured={}",
            row.offset,
            row.delta_hat,
            row.delta_stderr,
            row.pilot.p_differ,
            row.calibration.r_star,
            row.calibration.speed_up(),
            row.measured_speed_up.map_or("n/a".to_string(), |s| format!("{s:.1}"))
        );
        table.push(vec![
            row.offset.into(),
            row.sigma_hat.into(),
            row.delta_hat.into(),
            row.delta_stderr.into(),
            report.reference.mean.into(),
            report.reference.stderr.into(),
            row.misspecified_mean.into(),
            row.pilot.p_differ.into(),
            row.pilot.rho1.into(),
            row.pilot.rho2.into(),
            row.pilot.v1.into(),
            row.pilot.v2.into(),
            row.calibration.r_star.into(),
            row.calibration.r_rounded.into(),
            row.calibration.gamma_star.into(),
            row.calibration.speed_up().into(),
            row.measured_speed_up.into(),
            row.nested.work_units().into(),
        ]);
    }
    Outcome::ok(table, json!({ "config": study, "report": report }))
}

fn rule_spec(cfg: &Config, side: char, default: RuleSpec) -> Result<RuleSpec, ConfigError> {
    let key = |k: &str| format!("rules.{side}.{k}");
    let training_paths = cfg.get_or(&key("training_paths"), default.training_paths)?;
    let lookahead_order = match cfg.raw(&key("kind")) {
        None => cfg.get_or(&key("lookahead_order"), default.lookahead_order)?,
        Some("regression") => 0,
        Some("lookahead") => cfg.get_or(&key("lookahead_order"), default.lookahead_order.max(1))?,
        Some(other) => {
            return Err(ConfigError(format!(
                "`{}` must be regression or lookahead here, got `{other}`",
                key("kind")
            )))
        }
    };
    Ok(RuleSpec { training_paths, lookahead_order })
}

pub fn qcv_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let d = QcvConfig::default();
    let (pilot_trunks, pilot_replications) = pilot_settings(cfg, d.pilot_trunks, d.pilot_replications)?;
    let qcv = QcvConfig {
        model: gbm_params(cfg, d.model.d)?,
        rule_a: rule_spec(cfg, 'a', d.rule_a)?,
        rule_b: rule_spec(cfg, 'b', d.rule_b)?,
        training: training_setup(cfg)?,
        budget: cfg.get_or("qcv.budget", d.budget)?,
        pilot_paths_a: cfg.get_or("qcv.pilot_paths_a", d.pilot_paths_a)?,
        pilot_paths_b: cfg.get_or("qcv.pilot_paths_b", d.pilot_paths_b)?,
        pilot_trunks,
        pilot_replications,
        replications: cfg.get("qcv.replications")?,
        seed,
    };
    let report = qcv_estimate(&qcv).map_err(Failure::runtime)?;
    let mut table = Table::new(QCV_COLUMNS);
    for row in &report.rows {
        println!(
            "{:<11} estimate={:.6} variance={:.6e} work={:.4e}",
            row.method.name(),
            row.estimate,
            row.variance,
            row.work_units
        );
        table.push(vec![
            row.method.name().into(),
            row.estimate.into(),
            row.variance.into(),
            row.variance.sqrt().into(),
            row.control_mean.into(),
            row.control_paths.into(),
            row.paths.into(),
            row.replications.into(),
            row.work_units.into(),
            row.budget.into(),
            (row.work_units / row.budget).into(),
        ]);
    }
    println!(
        "predicted gamma*={:.4}, measured={}",
        report.calibration.gamma_star,
        report.measured_gain.map_or("n/a".to_string(), |g| format!("{g:.4}"))
    );
    Outcome::ok(table, json!({ "config": qcv, "report": report }))
}

fn ladder(cfg: &Config, default: Vec<RuleSpec>) -> Result<Vec<RuleSpec>, ConfigError> {
    let Some(raw) = cfg.raw("multilevel.ladder") else { return Ok(default) };
    raw.split(',')
        .map(|item| {
            let item = item.trim();
            let (paths, order) = item.split_once(':').unwrap_or((item, "0"));
            match (paths.trim().parse(), order.trim().parse()) {
                (Ok(training_paths), Ok(lookahead_order)) => Ok(RuleSpec { training_paths, lookahead_order }),
                _ => Err(ConfigError(format!("bad item `{item}` in `multilevel.ladder`"))),
            }
        })
        .collect()
}

pub fn multilevel_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let d = MultilevelConfig::default();
    let (pilot_trunks, pilot_replications) = pilot_settings(cfg, d.pilot_trunks, d.pilot_replications)?;
    let ml = MultilevelConfig {
        model: gbm_params(cfg, d.model.d)?,
        ladder: ladder(cfg, d.ladder)?,
        training: training_setup(cfg)?,
        budget: cfg.get_or("multilevel.budget", d.budget)?,
        pilot_base_paths: cfg.get_or("multilevel.pilot_base_paths", d.pilot_base_paths)?,
        pilot_fine_paths: cfg.get_or("multilevel.pilot_fine_paths", d.pilot_fine_paths)?,
        pilot_trunks,
        pilot_replications,
        seed,
    };
    let report = multilevel_estimate(&ml).map_err(Failure::runtime)?;
    let mut table = Table::new(MULTILEVEL_COLUMNS);
    for row in &report.rows {
        println!(
            "{:<17} estimate={:.6} variance={:.6e} work={:.4e}",
            row.method.name(),
            row.estimate,
            row.variance,
            row.work_units
        );
        for level in &row.levels {
            table.push(vec![
                row.method.name().into(),
                Cell::Int(level.level as u64),
                level.paths.into(),
                level.replications.into(),
                level.estimate.into(),
                level.variance.into(),
                level.work_units.into(),
                row.budget.into(),
            ]);
        }
        table.push(vec![
            row.method.name().into(),
            "total".into(),
            Cell::Empty,
            Cell::Empty,
            row.estimate.into(),
            row.variance.into(),
            row.work_units.into(),
            row.budget.into(),
        ]);
    }
    println!("telescoping check: z = {:.3}", report.telescoping_z);
    Outcome::ok(table, json!({ "config": ml, "report": report }))
}

fn profile_params(cfg: &Config, seed: u64) -> Result<(CalibParams, Option<PilotReport>), Failure> {
    let keys = ["vprofile.v1", "vprofile.v2", "vprofile.rho1", "vprofile.rho2"];
    let given: Vec<Option<f64>> = keys.iter().map(|k| cfg.get(k)).collect::<Result<_, _>>()?;
    if given.iter().all(Option::is_some) {
        let v: Vec<f64> = given.into_iter().flatten().collect();
        let p = CalibParams::new(v[0], v[1], v[2], v[3]).map_err(|e| ConfigError(e.to_string()))?;
        return Ok((p, None));
    }
    if given.iter().any(Option::is_some) {
        return Err(ConfigError("set all of vprofile.v1, v2, rho1, rho2 or none of them".into()).into());
    }
    let (report, _, _) = match rule_pair(cfg)? {
        Pair::Gbm { model, a, b } => run_pilot(&model, &a, &b, cfg, seed)?,
        Pair::Tree { model, a, b } => run_pilot(&model, &a, &b, cfg, seed)?,
    };
    let (p, _) = report.calib_params().map_err(Failure::runtime)?;
    Ok((p, Some(report)))
}

pub fn vprofile_cmd(cfg: &Config, seed: u64) -> Result<Outcome, Failure> {
    let (params, pilot) = profile_params(cfg, seed)?;
    let calib = optimal_R(&params);
    let r_min = cfg.get_or("vprofile.r_min", 1.0f64)?;
    let r_max = cfg.get_or("vprofile.r_max", (10.0 * calib.r_star).max(10.0))?;
    let points = cfg.get_or("vprofile.points", 200usize)?;
    if !(r_min >= 1.0 && r_max > r_min && points >= 2) {
        return Err(ConfigError("need 1 <= vprofile.r_min < vprofile.r_max and vprofile.points >= 2".into()).into());
    }
    let best = v_profile(&params, calib.r_star).map_err(Failure::runtime)?;
    let mut table = Table::new(VPROFILE_COLUMNS);
    let ratio = (r_max / r_min).ln();
    for i in 0..points {
        let r = r_min * (ratio * i as f64 / (points - 1) as f64).exp();
        let v = v_profile(&params, r).map_err(Failure::runtime)?;
        table.push(vec![r.into(), v.into(), (v / best).into()]);
    }
    println!("R*={:.4} gamma*={:.6}; {points} grid points on [{r_min}, {r_max}]", calib.r_star, calib.gamma_star);
    Outcome::ok(table, json!({ "params": params, "calibration": calib, "pilot": pilot }))
}
