use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::nested::{metered_decision, WorkMeter};
use crate::process::{advance, Process};
use crate::rng::{Namespace, StreamKey};
use crate::stopping::{Decision, StoppingRule};
use crate::summation::{mean, pairwise_sum, sample_variance};

/// Plain Monte Carlo estimate of `E[X_τ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlainEstimate {
    pub mean: f64,
    pub sample_variance: f64,
    pub stderr: f64,
    pub paths: usize,
    pub work: WorkMeter,
}

impl PlainEstimate {
    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr
    }

    pub fn cost_per_path(&self) -> f64 {
        self.work.units() / self.paths as f64
    }
}

/// `X_τ` on the path of `key`, with the simulation and rule cost.
pub fn stopped_value<P, R>(model: &P, rule: &R, key: StreamKey) -> (f64, WorkMeter)
where
    P: Process + ?Sized,
    R: StoppingRule<P> + ?Sized,
{
    let mut work = WorkMeter::default();
    let mut rng = key.base_rng();
    let mut state = model.initial_state();
    while metered_decision(model, rule, &state, &mut work) == Decision::Continue {
        state = advance(model, &state, &key, &mut rng);
        work += WorkMeter::steps(model.step_work());
    }
    (model.payoff(&state), work)
}

pub fn plain_estimate<P, R>(model: &P, rule: &R, paths: usize, seed: u64, namespace: Namespace) -> Result<PlainEstimate>
where
    P: Process + ?Sized,
    R: StoppingRule<P> + ?Sized,
{
    if paths < 2 {
        return Err(invalid(format!("need at least 2 paths, got {paths}")));
    }
    if namespace.is_training() {
        return Err(invalid("estimation streams must not come from the training namespace"));
    }
    let runs: Vec<(f64, WorkMeter)> = (0..paths as u64)
        .into_par_iter()
        .map(|i| stopped_value(model, rule, StreamKey::trunk(seed, namespace, i)))
        .collect();
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let var = sample_variance(&values);
    Ok(PlainEstimate {
        mean: mean(&values),
        sample_variance: var,
        stderr: (var / paths as f64).sqrt(),
        paths,
        work: runs.iter().map(|r| r.1).sum(),
    })
}

/// Sum of independent estimates with their variances.
pub(crate) fn combine(parts: &[(f64, f64)]) -> (f64, f64) {
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let variances: Vec<f64> = parts.iter().map(|p| p.1).collect();
    (pairwise_sum(&values), pairwise_sum(&variances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::tree::{Mark, TWO_PERIOD_TREE};
    use crate::process::TreeModel;
    use crate::stopping::{FixedMaturity, StopImmediately, TreeRule};

    #[test]
    fn tree_rules() {
        let tree = TreeModel::parse(TWO_PERIOD_TREE).unwrap();
        let now = plain_estimate(&tree, &StopImmediately, 10, 1, Namespace::Testing(0)).unwrap();
        assert_eq!((now.mean, now.sample_variance), (1.0, 0.0));
        assert_eq!(now.work, WorkMeter::rule_evals(10));

        // E[X_2] = 0.3 (0.4*4 + 0.6*0.5) + 0.5 (0.5*2 + 0.25) + 0.2 (0.7*1.5)
        let exact = 0.3 * 1.9 + 0.5 * 1.25 + 0.2 * 1.05;
        let late = plain_estimate(&tree, &FixedMaturity, 200_000, 2, Namespace::Testing(0)).unwrap();
        assert!((late.mean - exact).abs() < 4.0 * late.stderr, "{late:?}");
        assert_eq!(late.work, WorkMeter { steps: 400_000, rule_evals: 400_000 });

        let a = TreeRule::Marked(Mark::A);
        let (x, w) = stopped_value(&tree, &a, StreamKey::trunk(5, Namespace::Testing(0), 0));
        assert!(x.is_finite() && w.rule_evals >= 1);
    }

    #[test]
    fn rejects_training_streams() {
        let tree = TreeModel::parse(TWO_PERIOD_TREE).unwrap();
        assert!(plain_estimate(&tree, &FixedMaturity, 10, 1, Namespace::Training(0)).is_err());
        assert!(plain_estimate(&tree, &FixedMaturity, 1, 1, Namespace::Testing(0)).is_err());
    }

    #[test]
    fn combine_adds_independent_parts() {
        assert_eq!(combine(&[(1.0, 0.5), (2.0, 0.25)]), (3.0, 0.75));
    }
}
