//! Models and rule pairs built from a config.

use std::fs;

use ncmc_core::experiments::{BenchmarkRule, RuleSpec, TrainingSetup};
use ncmc_core::nested::WorkMeter;
use ncmc_core::process::tree::{Mark, ONE_PERIOD_TREE, TWO_PERIOD_TREE};
use ncmc_core::process::{GbmModel, GbmParams, PathState, TreeModel};
use ncmc_core::stopping::{shift_rule, Basis, FixedMaturity, ShiftedRule, StopImmediately, StoppingRule, TreeRule, TvrRule};

use crate::config::{Config, ConfigError};
use crate::Failure;

pub fn gbm_params(cfg: &Config, default_d: usize) -> Result<GbmParams, ConfigError> {
    let d = cfg.get_or("model.d", default_d)?;
    let base = GbmParams::benchmark(d, cfg.get_or("model.y0", 90.0)?);
    let params = GbmParams {
        sigma: cfg.get_or("model.sigma", base.sigma)?,
        r: cfg.get_or("model.r", base.r)?,
        delta: cfg.get_or("model.delta", base.delta)?,
        strike: cfg.get_or("model.strike", base.strike)?,
        maturity: cfg.get_or("model.maturity", base.maturity)?,
        dates: cfg.get_or("model.dates", base.dates)?,
        ..base
    };
    params.validate().map_err(|e| ConfigError(format!("invalid model: {e}")))?;
    Ok(params)
}

pub fn training_setup(cfg: &Config) -> Result<TrainingSetup, ConfigError> {
    let default = TrainingSetup::default();
    let basis = match cfg.raw("training.basis") {
        None => default.basis,
        Some(name) => Basis::from_name(name)
            .ok_or_else(|| ConfigError(format!("bad value for `training.basis`: `{name}`")))?,
    };
    Ok(TrainingSetup {
        seed: cfg.get_or("training.seed", default.seed)?,
        basis,
        in_the_money_only: cfg.get_or("training.itm_only", default.in_the_money_only)?,
    })
}

pub fn tree_model(cfg: &Config) -> Result<TreeModel, ConfigError> {
    let source = cfg.raw("model.tree").unwrap_or("two_period");
    let text = match source {
        "one_period" => ONE_PERIOD_TREE.to_string(),
        "two_period" => TWO_PERIOD_TREE.to_string(),
        path => fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read tree file `{path}`: {e}")))?,
    };
    TreeModel::parse(&text).map_err(|e| ConfigError(format!("tree `{source}`: {e}")))
}

/// A stopping rule for the max-call model as selected by `rules.<side>.*`.
pub enum GbmRule {
    Benchmark(BenchmarkRule),
    Shifted(ShiftedRule<TvrRule>),
    Fixed,
    Immediate,
}

impl StoppingRule<GbmModel> for GbmRule {
    fn stops_early(&self, model: &GbmModel, state: &PathState) -> bool {
        match self {
            GbmRule::Benchmark(r) => r.stops_early(model, state),
            GbmRule::Shifted(r) => r.stops_early(model, state),
            GbmRule::Fixed => StoppingRule::<GbmModel>::stops_early(&FixedMaturity, model, state),
            GbmRule::Immediate => StoppingRule::<GbmModel>::stops_early(&StopImmediately, model, state),
        }
    }

    fn decision_work(&self, model: &GbmModel, state: &PathState) -> WorkMeter {
        match self {
            GbmRule::Benchmark(r) => r.decision_work(model, state),
            GbmRule::Shifted(r) => r.decision_work(model, state),
            GbmRule::Fixed => StoppingRule::<GbmModel>::decision_work(&FixedMaturity, model, state),
            GbmRule::Immediate => StoppingRule::<GbmModel>::decision_work(&StopImmediately, model, state),
        }
    }
}

pub fn gbm_rule(cfg: &Config, side: char, params: &GbmParams, setup: &TrainingSetup) -> Result<GbmRule, Failure> {
    let key = |k: &str| format!("rules.{side}.{k}");
    let kind = cfg.raw(&key("kind")).unwrap_or("regression").to_string();
    let training_paths = cfg.get_or(&key("training_paths"), 10_000usize)?;
    let belief_sigma = cfg.get_or(&key("sigma"), params.sigma)?;
    let belief = GbmModel::new(params.with_sigma(belief_sigma)).map_err(|e| ConfigError(e.to_string()))?;
    let rule = match kind.as_str() {
        "regression" => GbmRule::Benchmark(
            BenchmarkRule::build(&belief, RuleSpec::regression(training_paths), setup).map_err(Failure::runtime)?,
        ),
        "lookahead" => {
            let order = cfg.get_or(&key("lookahead_order"), 2usize)?;
            if order == 0 {
                return Err(ConfigError(format!("`{}` must be at least 1", key("lookahead_order"))).into());
            }
            GbmRule::Benchmark(
                BenchmarkRule::build(&belief, RuleSpec::lookahead(training_paths, order), setup)
                    .map_err(Failure::runtime)?,
            )
        }
        "shifted" => {
            let BenchmarkRule::Regression(base) =
                BenchmarkRule::build(&belief, RuleSpec::regression(training_paths), setup).map_err(Failure::runtime)?
            else {
                unreachable!("regression spec builds a regression rule")
            };
            let eps = cfg.get_or(&key("shift"), 0.0f64)?;
            GbmRule::Shifted(shift_rule(base, eps).map_err(|e| ConfigError(e.to_string()))?)
        }
        "fixed_maturity" => GbmRule::Fixed,
        "immediate" => GbmRule::Immediate,
        other => return Err(ConfigError(format!("unknown rule kind `{other}` for `{}`", key("kind"))).into()),
    };
    Ok(rule)
}

pub enum TreeChoice {
    Marked(TreeRule),
    Fixed,
    Immediate,
}

impl StoppingRule<TreeModel> for TreeChoice {
    fn stops_early(&self, model: &TreeModel, state: &ncmc_core::process::NodeId) -> bool {
        match self {
            TreeChoice::Marked(r) => r.stops_early(model, state),
            TreeChoice::Fixed => StoppingRule::<TreeModel>::stops_early(&FixedMaturity, model, state),
            TreeChoice::Immediate => StoppingRule::<TreeModel>::stops_early(&StopImmediately, model, state),
        }
    }
}

pub fn tree_rule(cfg: &Config, side: char) -> Result<TreeChoice, ConfigError> {
    let key = |k: &str| format!("rules.{side}.{k}");
    let default_mark = if side == 'a' { "A" } else { "B" };
    match cfg.raw(&key("kind")).unwrap_or("marked") {
        "marked" => {
            let mark = match cfg.raw(&key("mark")).unwrap_or(default_mark) {
                "A" => Mark::A,
                "B" => Mark::B,
                other => return Err(ConfigError(format!("bad value for `{}`: `{other}`", key("mark")))),
            };
            Ok(TreeChoice::Marked(TreeRule::Marked(mark)))
        }
        "fixed_maturity" => Ok(TreeChoice::Fixed),
        "immediate" => Ok(TreeChoice::Immediate),
        other => Err(ConfigError(format!("unknown tree rule kind `{other}` for `{}`", key("kind")))),
    }
}

pub enum Pair {
    Gbm { model: GbmModel, a: GbmRule, b: GbmRule },
    Tree { model: TreeModel, a: TreeChoice, b: TreeChoice },
}

pub fn rule_pair(cfg: &Config) -> Result<Pair, Failure> {
    match cfg.raw("model.kind").unwrap_or("gbm") {
        "gbm" => {
            let params = gbm_params(cfg, 2)?;
            let setup = training_setup(cfg)?;
            let a = gbm_rule(cfg, 'a', &params, &setup)?;
            let b = gbm_rule(cfg, 'b', &params, &setup)?;
            let model = GbmModel::new(params).map_err(Failure::runtime)?;
            Ok(Pair::Gbm { model, a, b })
        }
        "tree" => Ok(Pair::Tree { model: tree_model(cfg)?, a: tree_rule(cfg, 'a')?, b: tree_rule(cfg, 'b')? }),
        other => Err(ConfigError(format!("unknown model kind `{other}`")).into()),
    }
}
