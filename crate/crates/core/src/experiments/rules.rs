use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nested::WorkMeter;
use crate::process::{GbmModel, PathState};
use crate::rng::Namespace;
use crate::stopping::{Basis, LookaheadRule, StoppingRule, TvrRule};

/// How a benchmark exercise rule is built: a regression rule fitted on the
/// first `training_paths` training streams, optionally refined by a one-step
/// quadrature lookahead of the given order (0 = none).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub training_paths: usize,
    pub lookahead_order: usize,
}

impl RuleSpec {
    pub fn regression(training_paths: usize) -> Self {
        Self { training_paths, lookahead_order: 0 }
    }

    pub fn lookahead(training_paths: usize, order: usize) -> Self {
        Self { training_paths, lookahead_order: order }
    }
}

/// Settings shared by every rule of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSetup {
    pub seed: u64,
    pub basis: Basis,
    pub in_the_money_only: bool,
}

impl Default for TrainingSetup {
    fn default() -> Self {
        Self { seed: 7, basis: Basis::Quadratic, in_the_money_only: true }
    }
}

#[derive(Debug, Clone)]
pub enum BenchmarkRule {
    Regression(TvrRule),
    Lookahead(LookaheadRule<TvrRule>),
}

impl BenchmarkRule {
    /// Trains under `belief`, the model the rule assumes. Rules built from
    /// the same setup share training streams, so smaller training sets are
    /// prefixes of larger ones and different volatilities see the same
    /// Brownian draws.
    pub fn build(belief: &GbmModel, spec: RuleSpec, setup: &TrainingSetup) -> Result<Self> {
        let base = TvrRule::train_on_streams(
            belief,
            setup.basis,
            spec.training_paths,
            setup.seed,
            Namespace::Training(0),
        )?
        .in_the_money_only(setup.in_the_money_only);
        Ok(match spec.lookahead_order {
            0 => BenchmarkRule::Regression(base),
            order => BenchmarkRule::Lookahead(LookaheadRule::new(base, belief.clone(), order)?),
        })
    }
}

impl StoppingRule<GbmModel> for BenchmarkRule {
    fn stops_early(&self, model: &GbmModel, state: &PathState) -> bool {
        match self {
            BenchmarkRule::Regression(r) => r.stops_early(model, state),
            BenchmarkRule::Lookahead(r) => r.stops_early(model, state),
        }
    }

    fn decision_work(&self, model: &GbmModel, state: &PathState) -> WorkMeter {
        match self {
            BenchmarkRule::Regression(r) => r.decision_work(model, state),
            BenchmarkRule::Lookahead(r) => r.decision_work(model, state),
        }
    }
}
