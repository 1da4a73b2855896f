//! The two-stage nested conditional Monte Carlo estimator.
//!
//! Stage one simulates `N` trunk paths until the first of the two rules
//! stops (`τ^∧`). Where the rules disagree, stage two restarts `R`
//! conditionally independent continuations from the trunk's state at `τ^∧`
//! and runs each until the surviving rule stops (`τ^∨`). The estimate of
//! `E[X_{τ^A} - X_{τ^B}]` is the mean over trunks of the mean over
//! replications of `S (X_{τ^∨} - X_{τ^∧})` with `S = sign(τ^A - τ^B)`.
//!
//! Work is metered in deterministic units: one per asset per simulated date,
//! plus one per ten rule evaluations.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{optimal_R, CalibParams, CalibReport};
use crate::error::{invalid, Result};
use crate::process::{advance, Process};
use crate::rng::{Namespace, StreamKey};
use crate::stopping::{Decision, StoppingRule};
use crate::summation::{mean, pairwise_sum, sample_variance};

/// Rule evaluations that cost as much as one single-asset simulation step.
pub const RULE_EVALS_PER_UNIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorkMeter {
    pub steps: u64,
    pub rule_evals: u64,
}

impl WorkMeter {
    pub fn steps(steps: u64) -> Self {
        Self { steps, rule_evals: 0 }
    }

    pub fn rule_evals(rule_evals: u64) -> Self {
        Self { steps: 0, rule_evals }
    }

    pub fn units(&self) -> f64 {
        self.steps as f64 + self.rule_evals as f64 / RULE_EVALS_PER_UNIT
    }
}

impl Add for WorkMeter {
    type Output = WorkMeter;

    fn add(self, rhs: WorkMeter) -> WorkMeter {
        WorkMeter {
            steps: self.steps + rhs.steps,
            rule_evals: self.rule_evals + rhs.rule_evals,
        }
    }
}

impl AddAssign for WorkMeter {
    fn add_assign(&mut self, rhs: WorkMeter) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for WorkMeter {
    fn sum<I: Iterator<Item = WorkMeter>>(iter: I) -> WorkMeter {
        iter.fold(WorkMeter::default(), Add::add)
    }
}

/// Decision with its evaluation cost charged to `work`. The final date is a
/// forced stop and costs nothing.
pub(crate) fn metered_decision<P, R>(model: &P, rule: &R, state: &P::State, work: &mut WorkMeter) -> Decision
where
    P: Process + ?Sized,
    R: StoppingRule<P> + ?Sized,
{
    if model.date(state) >= model.horizon() {
        return Decision::Stop;
    }
    *work += rule.decision_work(model, state);
    if rule.stops_early(model, state) {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Survivor {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkRecord<S> {
    pub key: StreamKey,
    pub tau_wedge: usize,
    /// `sign(τ^A - τ^B)`, known at `τ^∧`.
    pub sign: i8,
    pub x_wedge: f64,
    pub resume_state: S,
    /// The rule that has not stopped yet; `None` iff `sign == 0`.
    pub surviving: Option<Survivor>,
    pub work: WorkMeter,
}

/// Stage one: simulate until the first of the two rules stops.
pub fn run_trunk<P, A, B>(model: &P, rule_a: &A, rule_b: &B, key: StreamKey) -> TrunkRecord<P::State>
where
    P: Process + ?Sized,
    A: StoppingRule<P> + ?Sized,
    B: StoppingRule<P> + ?Sized,
{
    let mut work = WorkMeter::default();
    let mut rng = key.base_rng();
    let mut state = model.initial_state();
    loop {
        let a = metered_decision(model, rule_a, &state, &mut work) == Decision::Stop;
        let b = metered_decision(model, rule_b, &state, &mut work) == Decision::Stop;
        if a || b {
            let (sign, surviving) = match (a, b) {
                (true, true) => (0, None),
                (true, false) => (-1, Some(Survivor::B)),
                (false, true) => (1, Some(Survivor::A)),
                (false, false) => unreachable!(),
            };
            return TrunkRecord {
                key,
                tau_wedge: model.date(&state),
                sign,
                x_wedge: model.payoff(&state),
                resume_state: state,
                surviving,
                work,
            };
        }
        state = advance(model, &state, &key, &mut rng);
        work += WorkMeter::steps(model.step_work());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsamples {
    /// `S (X_{τ^∨} - X_{τ^∧})` for each replication.
    pub values: Vec<f64>,
    pub work: WorkMeter,
}

/// Stage two: `R` conditionally independent continuations of `trunk`, each
/// run until the surviving rule stops. Replication `r` uses stream
/// `trunk.key` with replication index `r` (1-based; 0 is the trunk itself).
pub fn run_subsamples<P, A, B>(
    trunk: &TrunkRecord<P::State>,
    model: &P,
    rule_a: &A,
    rule_b: &B,
    replications: usize,
) -> Result<Subsamples>
where
    P: Process + ?Sized,
    A: StoppingRule<P> + ?Sized,
    B: StoppingRule<P> + ?Sized,
{
    if replications < 1 {
        return Err(invalid("at least one replication is required"));
    }
    let mut work = WorkMeter::default();
    let Some(survivor) = trunk.surviving else {
        return Ok(Subsamples { values: vec![0.0; replications], work });
    };
    let sign = trunk.sign as f64;
    let values = (1..=replications as u32)
        .map(|r| {
            let key = trunk.key.with_replication(r);
            let mut rng = key.base_rng();
            let mut state = trunk.resume_state.clone();
            loop {
                state = advance(model, &state, &key, &mut rng);
                work += WorkMeter::steps(model.step_work());
                let decision = match survivor {
                    Survivor::A => metered_decision(model, rule_a, &state, &mut work),
                    Survivor::B => metered_decision(model, rule_b, &state, &mut work),
                };
                if decision == Decision::Stop {
                    return sign * (model.payoff(&state) - trunk.x_wedge);
                }
            }
        })
        .collect();
    Ok(Subsamples { values, work })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NestedConfig {
    pub trunks: usize,
    pub replications: usize,
    pub seed: u64,
    pub namespace: Namespace,
}

impl NestedConfig {
    pub fn new(trunks: usize, replications: usize, seed: u64) -> Self {
        Self { trunks, replications, seed, namespace: Namespace::Testing(0) }
    }

    pub fn in_namespace(self, namespace: Namespace) -> Self {
        Self { namespace, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrunkOutcome {
    sign: i8,
    mean: f64,
    within_variance: f64,
    work_trunk: WorkMeter,
    work_sub: WorkMeter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedEstimate {
    pub delta_hat: f64,
    pub trunks: usize,
    pub replications: usize,
    /// Variance of the conditional mean; requires `R >= 2`.
    pub v1_hat: Option<f64>,
    /// Mean conditional variance; requires `R >= 2`.
    pub v2_hat: Option<f64>,
    /// Sample variance of the per-trunk replication means.
    pub trunk_mean_variance: f64,
    pub stderr: f64,
    /// Fraction of trunks on which the two rules disagree.
    pub p_differ: f64,
    pub work_trunk: WorkMeter,
    pub work_sub: WorkMeter,
}

impl NestedEstimate {
    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr
    }

    pub fn work_units(&self) -> f64 {
        self.work_trunk.units() + self.work_sub.units()
    }
}

/// `Δ^{(N,R)}` with its variance components. Trunks run in parallel; the
/// reduction is sequential in trunk order, so the result is bit-identical for
/// any thread count.
pub fn estimate<P, A, B>(model: &P, rule_a: &A, rule_b: &B, cfg: &NestedConfig) -> Result<NestedEstimate>
where
    P: Process + ?Sized,
    A: StoppingRule<P> + ?Sized,
    B: StoppingRule<P> + ?Sized,
{
    if cfg.trunks < 2 {
        return Err(invalid(format!("need at least 2 trunks, got {}", cfg.trunks)));
    }
    if cfg.replications < 1 {
        return Err(invalid("replication count must be at least 1"));
    }
    if cfg.namespace.is_training() {
        return Err(invalid("estimation streams must not come from the training namespace"));
    }
    let r = cfg.replications;
    let outcomes: Vec<TrunkOutcome> = (0..cfg.trunks as u64)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::trunk(cfg.seed, cfg.namespace, i);
            let trunk = run_trunk(model, rule_a, rule_b, key);
            let subs = run_subsamples(&trunk, model, rule_a, rule_b, r)
                .expect("replication count validated above");
            TrunkOutcome {
                sign: trunk.sign,
                mean: mean(&subs.values),
                within_variance: sample_variance(&subs.values),
                work_trunk: trunk.work,
                work_sub: subs.work,
            }
        })
        .collect();

    let n = outcomes.len() as f64;
    let means: Vec<f64> = outcomes.iter().map(|o| o.mean).collect();
    let delta_hat = pairwise_sum(&means) / n;
    let trunk_mean_variance = sample_variance(&means);
    let (v1_hat, v2_hat, stderr) = if r >= 2 {
        let within: Vec<f64> = outcomes.iter().map(|o| o.within_variance).collect();
        let v2 = pairwise_sum(&within) / n;
        let v1 = (trunk_mean_variance - v2 / r as f64).max(0.0);
        (Some(v1), Some(v2), (v1 / n + v2 / (r as f64 * n)).sqrt())
    } else {
        (None, None, (trunk_mean_variance / n).sqrt())
    };
    let differ = outcomes.iter().filter(|o| o.sign != 0).count();
    Ok(NestedEstimate {
        delta_hat,
        trunks: cfg.trunks,
        replications: r,
        v1_hat,
        v2_hat,
        trunk_mean_variance,
        stderr,
        p_differ: differ as f64 / n,
        work_trunk: outcomes.iter().map(|o| o.work_trunk).sum(),
        work_sub: outcomes.iter().map(|o| o.work_sub).sum(),
    })
}

pub const MIN_PILOT_TRUNKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PilotReport {
    pub v1: f64,
    pub v2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub p_differ: f64,
    /// The rules never disagreed: `Δ` is exactly zero on the pilot sample
    /// and nesting has nothing to do.
    pub degenerate: bool,
    pub trunks: usize,
    pub replications: usize,
}

impl PilotReport {
    /// Calibration inputs, with exact zeros lifted to `1e-12` times the
    /// scale of their pair. The flag reports whether any floor was applied.
    pub fn calib_params(&self) -> Result<(CalibParams, bool)> {
        let floor = |a: f64, b: f64| if a.max(b) > 0.0 { 1e-12 * a.max(b) } else { 1e-12 };
        let v_floor = floor(self.v1, self.v2);
        let rho_floor = floor(self.rho1, self.rho2);
        let lift = |v: f64, floor: f64| if v > 0.0 { (v, false) } else { (floor, true) };
        let (v1, f1) = lift(self.v1, v_floor);
        let (v2, f2) = lift(self.v2, v_floor);
        let (rho1, f3) = lift(self.rho1, rho_floor);
        let (rho2, f4) = lift(self.rho2, rho_floor);
        let params = CalibParams::new(v1, v2, rho1, rho2)?.with_p_differ(self.p_differ);
        Ok((params, f1 || f2 || f3 || f4))
    }

    pub fn report(&self) -> Result<CalibReport> {
        if self.degenerate {
            return Ok(CalibReport::degenerate());
        }
        Ok(optimal_R(&self.calib_params()?.0))
    }
}

/// Pilot run estimating `(v1, v2, ρ1, ρ2)` and the disagreement probability.
pub fn pilot<P, A, B>(
    model: &P,
    rule_a: &A,
    rule_b: &B,
    trunks: usize,
    replications: usize,
    seed: u64,
    namespace: Namespace,
) -> Result<PilotReport>
where
    P: Process + ?Sized,
    A: StoppingRule<P> + ?Sized,
    B: StoppingRule<P> + ?Sized,
{
    if trunks < MIN_PILOT_TRUNKS {
        return Err(invalid(format!("pilot needs at least {MIN_PILOT_TRUNKS} trunks, got {trunks}")));
    }
    if replications < 2 {
        return Err(invalid("pilot needs at least 2 replications to separate v1 from v2"));
    }
    let est = estimate(
        model,
        rule_a,
        rule_b,
        &NestedConfig { trunks, replications, seed, namespace },
    )?;
    let n = trunks as f64;
    Ok(PilotReport {
        v1: est.v1_hat.unwrap_or(0.0),
        v2: est.v2_hat.unwrap_or(0.0),
        rho1: est.work_trunk.units() / n,
        rho2: est.work_sub.units() / (n * replications as f64),
        p_differ: est.p_differ,
        degenerate: est.p_differ == 0.0,
        trunks,
        replications,
    })
}
