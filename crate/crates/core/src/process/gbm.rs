//! Independent geometric Brownian motions with dividends and the discounted
//! Bermudan max-call payoff.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::Process;
use crate::error::{invalid, Result};

pub type Assets = SmallVec<[f64; 8]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    /// Number of assets.
    pub d: usize,
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub strike: f64,
    /// Common initial price of every asset.
    pub y0: f64,
    pub maturity: f64,
    /// Number of exercise dates, `J + 1`.
    pub dates: usize,
}

impl GbmParams {
    /// The d-asset max-call benchmark: T=3, r=5%, δ=10%, σ=20%, K=100,
    /// ten equally spaced exercise dates starting at t=0.
    pub fn benchmark(d: usize, y0: f64) -> Self {
        Self {
            d,
            r: 0.05,
            delta: 0.1,
            sigma: 0.2,
            strike: 100.0,
            y0,
            maturity: 3.0,
            dates: 10,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn horizon(&self) -> usize {
        self.dates - 1
    }

    /// Exercise time `t_j = j T / J`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.maturity / self.horizon() as f64
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.horizon() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(invalid("asset count d must be at least 1"));
        }
        if self.dates < 2 {
            return Err(invalid("at least two exercise dates are required"));
        }
        for (name, v) in [
            ("r", self.r),
            ("delta", self.delta),
            ("sigma", self.sigma),
            ("strike", self.strike),
            ("y0", self.y0),
            ("maturity", self.maturity),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.sigma < 0.0 {
            return Err(invalid("sigma must be non-negative"));
        }
        if self.maturity <= 0.0 || self.strike <= 0.0 || self.y0 <= 0.0 {
            return Err(invalid("maturity, strike and y0 must be positive"));
        }
        Ok(())
    }
}

/// Exact log-normal transition over `dt`.
pub fn gbm_step(assets: &[f64], dt: f64, params: &GbmParams, normals: &[f64]) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("dt must be positive and finite, got {dt}")));
    }
    if normals.len() != assets.len() {
        return Err(invalid(format!(
            "expected {} normal draws, got {}",
            assets.len(),
            normals.len()
        )));
    }
    if assets.iter().chain(normals).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite price or draw"));
    }
    let drift = (params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt;
    let vol = params.sigma * dt.sqrt();
    Ok(assets
        .iter()
        .zip(normals)
        .map(|(y, z)| y * (drift + vol * z).exp())
        .collect())
}

/// `e^{-r t_j} (max_d y_d - K)^+`.
pub fn max_call_payoff(j: usize, assets: &[f64], params: &GbmParams) -> f64 {
    let best = assets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let intrinsic = (best - params.strike).max(0.0);
    if intrinsic == 0.0 {
        return 0.0;
    }
    (-params.r * params.time(j)).exp() * intrinsic
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub j: usize,
    pub assets: Assets,
    pub payoff: f64,
}

impl PathState {
    pub fn new(j: usize, assets: Assets, params: &GbmParams) -> Self {
        let payoff = max_call_payoff(j, &assets, params);
        Self { j, assets, payoff }
    }
}

/// [`GbmParams`] with the per-step constants precomputed.
#[derive(Debug, Clone)]
pub struct GbmModel {
    params: GbmParams,
    log_drift: f64,
    vol_sqrt_dt: f64,
    discounts: Vec<f64>,
}

impl GbmModel {
    pub fn new(params: GbmParams) -> Result<Self> {
        params.validate()?;
        let dt = params.dt();
        let discounts = (0..params.dates)
            .map(|j| (-params.r * params.time(j)).exp())
            .collect();
        Ok(Self {
            params,
            log_drift: (params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt,
            vol_sqrt_dt: params.sigma * dt.sqrt(),
            discounts,
        })
    }

    pub fn params(&self) -> &GbmParams {
        &self.params
    }

    pub fn payoff_at(&self, j: usize, assets: &[f64]) -> f64 {
        let best = assets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let intrinsic = best - self.params.strike;
        if intrinsic > 0.0 {
            self.discounts[j] * intrinsic
        } else {
            0.0
        }
    }

    pub fn state(&self, j: usize, assets: Assets) -> PathState {
        let payoff = self.payoff_at(j, &assets);
        PathState { j, assets, payoff }
    }

    /// Multiplicative one-step factor for a standard normal draw `z`.
    pub fn step_factor(&self, z: f64) -> f64 {
        (self.log_drift + self.vol_sqrt_dt * z).exp()
    }
}

impl Process for GbmModel {
    type State = PathState;

    fn horizon(&self) -> usize {
        self.params.horizon()
    }

    fn initial_state(&self) -> PathState {
        let assets: Assets = SmallVec::from_elem(self.params.y0, self.params.d);
        self.state(0, assets)
    }

    fn date(&self, state: &PathState) -> usize {
        state.j
    }

    fn payoff(&self, state: &PathState) -> f64 {
        state.payoff
    }

    fn transition(&self, state: &PathState, rng: &mut ChaCha8Rng) -> PathState {
        let assets: Assets = state
            .assets
            .iter()
            .map(|y| {
                let z: f64 = rng.sample(StandardNormal);
                y * self.step_factor(z)
            })
            .collect();
        self.state(state.j + 1, assets)
    }

    fn step_work(&self) -> u64 {
        self.params.d as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{continue_path, simulate_full_path};
    use crate::rng::{Namespace, StreamKey};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn deterministic_drift_step() {
        let p = GbmParams { sigma: 0.0, ..GbmParams::benchmark(1, 100.0) };
        let y = gbm_step(&[100.0], 1.0, &p, &[0.7]).unwrap();
        assert!(close(y[0], 100.0 * (-0.05f64).exp(), 1e-12));
        assert!(close(y[0], 95.1229, 1e-4));
    }

    #[test]
    fn zero_draw_step() {
        let p = GbmParams { r: 0.0, delta: 0.0, ..GbmParams::benchmark(1, 100.0) };
        let y = gbm_step(&[100.0], 1.0, &p, &[0.0]).unwrap();
        assert!(close(y[0], 98.0199, 1e-4));
    }

    #[test]
    fn step_rejects_bad_input() {
        let p = GbmParams::benchmark(2, 100.0);
        assert!(gbm_step(&[100.0, f64::NAN], 1.0, &p, &[0.0, 0.0]).is_err());
        assert!(gbm_step(&[100.0, 100.0], 1.0, &p, &[0.0, f64::INFINITY]).is_err());
        assert!(gbm_step(&[100.0], 1.0, &p, &[0.0, 0.0]).is_err());
        assert!(gbm_step(&[100.0], 0.0, &p, &[0.0]).is_err());
    }

    #[test]
    fn payoff_examples() {
        let p = GbmParams { r: 0.0, ..GbmParams::benchmark(2, 100.0) };
        assert_eq!(max_call_payoff(4, &[110.0, 90.0], &p), 10.0);
        assert_eq!(max_call_payoff(4, &[100.0, 80.0], &p), 0.0);
        // t_3 = 3 on a grid with T = 9, J = 9.
        let p = GbmParams { maturity: 9.0, ..GbmParams::benchmark(1, 100.0) };
        let x = max_call_payoff(3, &[120.0], &p);
        assert!(close(x, 20.0 * (-0.15f64).exp(), 1e-12));
        assert!(close(x, 17.2143, 5e-4));
    }

    #[test]
    fn params_validation() {
        assert!(GbmParams { d: 0, ..GbmParams::benchmark(1, 90.0) }.validate().is_err());
        assert!(GbmParams { dates: 1, ..GbmParams::benchmark(1, 90.0) }.validate().is_err());
        assert!(GbmParams { sigma: -0.1, ..GbmParams::benchmark(1, 90.0) }.validate().is_err());
        assert!(GbmParams { strike: 0.0, ..GbmParams::benchmark(1, 90.0) }.validate().is_err());
        let p = GbmParams::benchmark(2, 90.0);
        assert_eq!(p.time(0), 0.0);
        assert_eq!(p.time(9), 3.0);
    }

    #[test]
    fn zero_vol_path_is_closed_form() {
        let p = GbmParams { sigma: 0.0, ..GbmParams::benchmark(2, 120.0) };
        let m = GbmModel::new(p).unwrap();
        let t = simulate_full_path(&m, StreamKey::trunk(1, Namespace::Testing(0), 0));
        assert_eq!(t.len(), 10);
        for (j, s) in t.states.iter().enumerate() {
            assert_eq!(s.j, j);
            let y = 120.0 * ((p.r - p.delta) * p.time(j)).exp();
            assert!(close(s.assets[0], y, 1e-9));
            let x = (-p.r * p.time(j)).exp() * (y - 100.0).max(0.0);
            assert!(close(s.payoff, x, 1e-9));
        }
        let tail = continue_path(&m, &t.states[3], StreamKey::trunk(9, Namespace::Testing(0), 5)).unwrap();
        assert_eq!(tail.states.len(), 6);
        for (a, b) in tail.states.iter().zip(&t.states[4..]) {
            assert_eq!(a.j, b.j);
            assert!(close(a.assets[0], b.assets[0], 1e-9));
        }
    }

    #[test]
    fn paths_are_deterministic_and_payoffs_consistent() {
        let p = GbmParams::benchmark(3, 100.0);
        let m = GbmModel::new(p).unwrap();
        let key = StreamKey::trunk(42, Namespace::Testing(0), 17);
        let a = simulate_full_path(&m, key);
        let b = simulate_full_path(&m, key);
        assert_eq!(a, b);
        for s in &a.states {
            assert!(s.payoff >= 0.0);
            assert_eq!(s.payoff, max_call_payoff(s.j, &s.assets, &p));
            assert!(s.assets.iter().all(|y| *y > 0.0));
        }
    }

    #[test]
    fn continuation_from_last_date_fails() {
        let m = GbmModel::new(GbmParams::benchmark(2, 90.0)).unwrap();
        let t = simulate_full_path(&m, StreamKey::trunk(1, Namespace::Testing(0), 0));
        let err = continue_path(&m, t.states.last().unwrap(), t.key).unwrap_err();
        assert!(matches!(err, crate::NcmcError::CannotContinue(9)));
    }

    #[test]
    fn distinct_replications_diverge() {
        let m = GbmModel::new(GbmParams::benchmark(2, 90.0)).unwrap();
        let t = simulate_full_path(&m, StreamKey::trunk(1, Namespace::Testing(0), 0));
        let a = continue_path(&m, &t.states[4], t.key.with_replication(1)).unwrap();
        let b = continue_path(&m, &t.states[4], t.key.with_replication(2)).unwrap();
        assert_ne!(a.states[0].assets, b.states[0].assets);
    }

    #[test]
    fn prefix_is_adapted() {
        // The state at date j only uses draws addressed to dates <= j, so a
        // path rebuilt by continuation from its own prefix is identical.
        let m = GbmModel::new(GbmParams::benchmark(2, 90.0)).unwrap();
        let key = StreamKey::trunk(3, Namespace::Testing(0), 8);
        let full = simulate_full_path(&m, key);
        let tail = continue_path(&m, &full.states[2], key).unwrap();
        assert_eq!(&full.states[3..], &tail.states[..]);
    }
}
