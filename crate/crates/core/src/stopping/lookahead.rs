//! One-step lookahead refinement of a regression rule.
//!
//! The continuation value at date `j` is the exact conditional expectation,
//! by tensor Gauss–Hermite quadrature over the next log-normal step, of the
//! base rule's value at `j + 1`: `max(X_{j+1}, Ĉ_{j+1})`, or `X_J` at the
//! last step. With `order` nodes per asset every decision costs `order^d`
//! simulated steps, so the refined rule is both more accurate and much more
//! expensive to evaluate than its base.

use nalgebra::{DMatrix, SymmetricEigen};
use smallvec::SmallVec;

use super::{exercise_now, ContinuationValue, StoppingRule};
use crate::error::{invalid, Result};
use crate::nested::WorkMeter;
use crate::process::gbm::Assets;
use crate::process::{GbmModel, PathState, Process};

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard
/// normal density (Golub–Welsch). Weights sum to one.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "quadrature order must be positive");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v * v)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone)]
pub struct LookaheadRule<C> {
    base: C,
    model: GbmModel,
    order: usize,
    /// Per-asset (multiplicative step factor, weight) pairs.
    factors: Vec<(f64, f64)>,
}

impl<C: ContinuationValue> LookaheadRule<C> {
    pub fn new(base: C, model: GbmModel, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("lookahead order must be at least 1"));
        }
        let factors = gauss_hermite(order)
            .into_iter()
            .map(|(z, w)| (model.step_factor(z), w))
            .collect();
        Ok(Self { base, model, order, factors })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> usize {
        self.order.pow(self.model.params().d as u32)
    }

    pub fn base(&self) -> &C {
        &self.base
    }

    fn value_next(&self, next: &PathState) -> f64 {
        if next.j >= self.model.horizon() {
            next.payoff
        } else {
            next.payoff.max(self.base.continuation(next))
        }
    }
}

impl<C: ContinuationValue> ContinuationValue for LookaheadRule<C> {
    fn in_the_money_only(&self) -> bool {
        self.base.in_the_money_only()
    }

    fn continuation(&self, state: &PathState) -> f64 {
        let d = state.assets.len();
        let mut idx: SmallVec<[usize; 8]> = SmallVec::from_elem(0, d);
        let mut total = 0.0;
        loop {
            let mut weight = 1.0;
            let assets: Assets = state
                .assets
                .iter()
                .zip(&idx)
                .map(|(y, &k)| {
                    weight *= self.factors[k].1;
                    y * self.factors[k].0
                })
                .collect();
            let next = self.model.state(state.j + 1, assets);
            total += weight * self.value_next(&next);
            // Odometer over the tensor grid.
            let mut pos = 0;
            loop {
                if pos == d {
                    return total;
                }
                idx[pos] += 1;
                if idx[pos] < self.order {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    fn continuation_work(&self, state: &PathState) -> WorkMeter {
        let nodes = self.nodes() as u64;
        let base_evals = if state.j + 1 < self.model.horizon() { nodes } else { 0 };
        WorkMeter {
            steps: nodes * self.model.step_work(),
            rule_evals: 1 + base_evals,
        }
    }
}

impl<C: ContinuationValue> StoppingRule<GbmModel> for LookaheadRule<C> {
    fn stops_early(&self, _: &GbmModel, state: &PathState) -> bool {
        exercise_now(state, self.continuation(state), self.in_the_money_only())
    }

    fn decision_work(&self, _: &GbmModel, state: &PathState) -> WorkMeter {
        self.continuation_work(state)
    }
}
