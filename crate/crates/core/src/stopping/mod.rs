//! Adapted stopping rules.
//!
//! A rule only ever sees the current state, which makes adaptedness a
//! structural property: it cannot look at future draws because it is never
//! given them. Every rule stops at the final date.

pub mod lookahead;
pub mod shifted;
pub mod tvr;

use std::collections::BTreeSet;

use crate::error::{invalid, Result};
use crate::nested::WorkMeter;
use crate::process::tree::Mark;
use crate::process::{NodeId, PathState, Process, TreeModel, Trajectory};

pub use lookahead::{gauss_hermite, LookaheadRule};
pub use shifted::{shift_rule, ShiftedRule};
pub use tvr::{train_tvr, Basis, TrainingMeta, TvrRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stop,
    Continue,
}

pub trait StoppingRule<P: Process + ?Sized>: Send + Sync {
    /// Whether to stop at a date strictly before maturity.
    fn stops_early(&self, model: &P, state: &P::State) -> bool;

    /// Work charged for one call to [`StoppingRule::stops_early`].
    fn decision_work(&self, _model: &P, _state: &P::State) -> WorkMeter {
        WorkMeter::rule_evals(1)
    }

    fn decide(&self, model: &P, state: &P::State) -> Decision {
        if model.date(state) >= model.horizon() || self.stops_early(model, state) {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }
}

impl<P: Process + ?Sized, R: StoppingRule<P> + ?Sized> StoppingRule<P> for Box<R> {
    fn stops_early(&self, model: &P, state: &P::State) -> bool {
        (**self).stops_early(model, state)
    }

    fn decision_work(&self, model: &P, state: &P::State) -> WorkMeter {
        (**self).decision_work(model, state)
    }
}

impl<P: Process + ?Sized, R: StoppingRule<P> + ?Sized> StoppingRule<P> for std::sync::Arc<R> {
    fn stops_early(&self, model: &P, state: &P::State) -> bool {
        (**self).stops_early(model, state)
    }

    fn decision_work(&self, model: &P, state: &P::State) -> WorkMeter {
        (**self).decision_work(model, state)
    }
}

/// Never stops before maturity (European exercise).
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedMaturity;

impl<P: Process + ?Sized> StoppingRule<P> for FixedMaturity {
    fn stops_early(&self, _: &P, _: &P::State) -> bool {
        false
    }
}

/// Stops at the first date it is asked about.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopImmediately;

impl<P: Process + ?Sized> StoppingRule<P> for StopImmediately {
    fn stops_early(&self, _: &P, _: &P::State) -> bool {
        true
    }
}

/// Node-predicate rules on a [`TreeModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum TreeRule {
    /// Stops at nodes carrying the given `stop=` mark in the tree file.
    Marked(Mark),
    /// Stops at any node in the set.
    Nodes(BTreeSet<NodeId>),
}

impl StoppingRule<TreeModel> for TreeRule {
    fn stops_early(&self, model: &TreeModel, state: &NodeId) -> bool {
        match self {
            TreeRule::Marked(mark) => model.is_marked(*state, *mark),
            TreeRule::Nodes(set) => set.contains(state),
        }
    }
}

/// Relative slack under which payoff and continuation value count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Stop iff `payoff >= continuation`. Values within a relative
/// `TIE_TOLERANCE` of each other count as tied, and ties stop. With
/// `in_the_money_only`, a zero payoff never stops before maturity.
pub(crate) fn exercise_now(state: &PathState, continuation: f64, in_the_money_only: bool) -> bool {
    if in_the_money_only && state.payoff <= 0.0 {
        return false;
    }
    let scale = state.payoff.abs().max(continuation.abs());
    state.payoff >= continuation - TIE_TOLERANCE * scale
}

/// First date `j >= from` at which `rule` stops along `trajectory`.
pub fn evaluate_rule<P, R>(
    model: &P,
    rule: &R,
    trajectory: &Trajectory<P::State>,
    from: usize,
) -> Result<usize>
where
    P: Process + ?Sized,
    R: StoppingRule<P> + ?Sized,
{
    let start = trajectory
        .states
        .iter()
        .position(|s| model.date(s) == from)
        .ok_or_else(|| invalid(format!("trajectory does not contain date {from}")))?;
    let last = trajectory.states.last().map(|s| model.date(s));
    if last != Some(model.horizon()) {
        return Err(invalid(format!(
            "trajectory ends at date {:?}, before maturity {}",
            last,
            model.horizon()
        )));
    }
    for s in &trajectory.states[start..] {
        if rule.decide(model, s) == Decision::Stop {
            return Ok(model.date(s));
        }
    }
    Ok(model.horizon())
}

/// A rule that exercises when the payoff reaches an estimated continuation
/// value.
pub trait ContinuationValue: Send + Sync {
    fn continuation(&self, state: &PathState) -> f64;

    /// Work charged for one continuation estimate.
    fn continuation_work(&self, _state: &PathState) -> WorkMeter {
        WorkMeter::rule_evals(1)
    }

    /// Whether worthless states are always continued.
    fn in_the_money_only(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::tree::ONE_PERIOD_TREE;
    use crate::process::{simulate_full_path, GbmModel, GbmParams};
    use crate::rng::{Namespace, StreamKey};

    #[test]
    fn fixed_and_immediate_rules() {
        let m = GbmModel::new(GbmParams::benchmark(2, 90.0)).unwrap();
        let t = simulate_full_path(&m, StreamKey::trunk(1, Namespace::Testing(0), 0));
        for from in 0..=9 {
            assert_eq!(evaluate_rule(&m, &FixedMaturity, &t, from).unwrap(), 9);
            assert_eq!(evaluate_rule(&m, &StopImmediately, &t, from).unwrap(), from);
        }
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let m = GbmModel::new(GbmParams::benchmark(2, 90.0)).unwrap();
        let mut t = simulate_full_path(&m, StreamKey::trunk(1, Namespace::Testing(0), 0));
        assert!(evaluate_rule(&m, &FixedMaturity, &t, 12).is_err());
        t.states.truncate(5);
        assert!(evaluate_rule(&m, &FixedMaturity, &t, 2).is_err());
    }

    #[test]
    fn tree_marks() {
        let tree = TreeModel::parse(ONE_PERIOD_TREE).unwrap();
        let a = TreeRule::Marked(Mark::A);
        let b = TreeRule::Marked(Mark::B);
        assert_eq!(a.decide(&tree, &tree.root()), Decision::Stop);
        assert_eq!(b.decide(&tree, &tree.root()), Decision::Continue);
        let leaf = tree.node(tree.root()).children[0].1;
        assert_eq!(b.decide(&tree, &leaf), Decision::Stop);
        let set = TreeRule::Nodes([tree.root()].into_iter().collect());
        assert_eq!(set.decide(&tree, &tree.root()), Decision::Stop);
    }
}
