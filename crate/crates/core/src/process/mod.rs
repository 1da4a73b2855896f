//! Discrete-time payoff processes.
//!
//! A [`Process`] produces adapted states on the date grid `0..=J`. Paths are
//! driven by [`StreamKey`]s: the transition into date `j` consumes only the
//! draws addressed by `(key, j)`, so a path restarted from any intermediate
//! state with a fresh replication index is conditionally independent of the
//! original continuation.

pub mod gbm;
pub mod tree;

use std::fmt::Debug;

use rand_chacha::ChaCha8Rng;

use crate::error::{NcmcError, Result};
use crate::rng::StreamKey;

pub use gbm::{gbm_step, max_call_payoff, GbmModel, GbmParams, PathState};
pub use tree::{NodeId, TreeModel};

pub trait Process: Send + Sync {
    type State: Clone + Debug + Send + Sync;

    /// Index `J` of the final date.
    fn horizon(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn date(&self, state: &Self::State) -> usize;

    /// Discounted exercise value at the state's date.
    fn payoff(&self, state: &Self::State) -> f64;

    /// Draws the state at `date(state) + 1`. `rng` is positioned at the
    /// draws reserved for that date.
    fn transition(&self, state: &Self::State, rng: &mut ChaCha8Rng) -> Self::State;

    /// Work units charged for one transition.
    fn step_work(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub key: StreamKey,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Advances `state` by one date using the draws `key` reserves for that date.
pub fn advance<P: Process + ?Sized>(
    model: &P,
    state: &P::State,
    key: &StreamKey,
    rng: &mut ChaCha8Rng,
) -> P::State {
    key.seek(rng, model.date(state) + 1);
    model.transition(state, rng)
}

/// Full path over dates `0..=J`.
pub fn simulate_full_path<P: Process + ?Sized>(model: &P, key: StreamKey) -> Trajectory<P::State> {
    let mut rng = key.base_rng();
    let mut states = Vec::with_capacity(model.horizon() + 1);
    let mut state = model.initial_state();
    for _ in 0..model.horizon() {
        let next = advance(model, &state, &key, &mut rng);
        states.push(std::mem::replace(&mut state, next));
    }
    states.push(state);
    Trajectory { states, key }
}

/// Continuation from `from` over dates `from.j + 1 ..= J`.
pub fn continue_path<P: Process + ?Sized>(
    model: &P,
    from: &P::State,
    key: StreamKey,
) -> Result<Trajectory<P::State>> {
    let start = model.date(from);
    if start >= model.horizon() {
        return Err(NcmcError::CannotContinue(start));
    }
    let mut rng = key.base_rng();
    let mut states = Vec::with_capacity(model.horizon() - start);
    let mut state = from.clone();
    while model.date(&state) < model.horizon() {
        state = advance(model, &state, &key, &mut rng);
        states.push(state.clone());
    }
    Ok(Trajectory { states, key })
}
