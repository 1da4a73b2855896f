use super::{exercise_now, ContinuationValue, StoppingRule, TvrRule};
use crate::error::{invalid, Result};
use crate::nested::WorkMeter;
use crate::process::{GbmModel, PathState};

/// Continuation-value rule biased towards late exercise: stops iff
/// `X_j >= Ĉ_j + epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedRule<C = TvrRule> {
    pub inner: C,
    pub epsilon: f64,
}

pub fn shift_rule<C: ContinuationValue>(rule: C, epsilon: f64) -> Result<ShiftedRule<C>> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(invalid(format!("shift must be non-negative, got {epsilon}")));
    }
    Ok(ShiftedRule { inner: rule, epsilon })
}

impl<C: ContinuationValue> ContinuationValue for ShiftedRule<C> {
    fn in_the_money_only(&self) -> bool {
        self.inner.in_the_money_only()
    }

    fn continuation(&self, state: &PathState) -> f64 {
        self.inner.continuation(state) + self.epsilon
    }

    fn continuation_work(&self, state: &PathState) -> WorkMeter {
        self.inner.continuation_work(state)
    }
}

impl<C: ContinuationValue> StoppingRule<GbmModel> for ShiftedRule<C> {
    fn stops_early(&self, _: &GbmModel, state: &PathState) -> bool {
        exercise_now(state, self.continuation(state), self.in_the_money_only())
    }

    fn decision_work(&self, _: &GbmModel, state: &PathState) -> WorkMeter {
        self.continuation_work(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{simulate_full_path, GbmParams, Process};
    use crate::rng::{Namespace, StreamKey};
    use crate::stopping::{evaluate_rule, Basis, FixedMaturity};

    fn trained() -> (GbmModel, TvrRule) {
        let model = GbmModel::new(GbmParams::benchmark(2, 100.0)).unwrap();
        let rule = TvrRule::train_on_streams(&model, Basis::Quadratic, 5000, 3, Namespace::Training(0)).unwrap();
        (model, rule)
    }

    #[test]
    fn negative_shift_is_rejected() {
        let (_, rule) = trained();
        assert!(shift_rule(rule.clone(), -0.1).is_err());
        assert!(shift_rule(rule, f64::NAN).is_err());
    }

    #[test]
    fn zero_and_infinite_shift() {
        let (model, rule) = trained();
        let zero = shift_rule(rule.clone(), 0.0).unwrap();
        let inf = shift_rule(rule.clone(), f64::INFINITY).unwrap();
        for i in 0..500 {
            let t = simulate_full_path(&model, StreamKey::trunk(9, Namespace::Testing(0), i));
            for s in &t.states {
                assert_eq!(zero.decide(&model, s), rule.decide(&model, s));
            }
            assert_eq!(
                evaluate_rule(&model, &inf, &t, 0).unwrap(),
                evaluate_rule(&model, &FixedMaturity, &t, 0).unwrap()
            );
            assert_eq!(evaluate_rule(&model, &inf, &t, 0).unwrap(), model.horizon());
        }
    }

    #[test]
    fn larger_shift_stops_later_pathwise() {
        let (model, rule) = trained();
        let shifts = [0.0, 0.05, 0.5, 2.0];
        let rules: Vec<_> = shifts.iter().map(|e| shift_rule(rule.clone(), *e).unwrap()).collect();
        let mut strictly_later = 0;
        for i in 0..10_000 {
            let t = simulate_full_path(&model, StreamKey::trunk(10, Namespace::Testing(0), i));
            let taus: Vec<usize> = rules.iter().map(|r| evaluate_rule(&model, r, &t, 0).unwrap()).collect();
            for w in taus.windows(2) {
                assert!(w[1] >= w[0]);
            }
            if taus[3] > taus[0] {
                strictly_later += 1;
            }
        }
        assert!(strictly_later > 0);
    }
}
