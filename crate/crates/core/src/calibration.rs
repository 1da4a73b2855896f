//! Closed-form calibration of the replication count.
//!
//! With `N` trunks and `R` replications the estimator costs
//! `N (ρ1 + R ρ2)` and has variance `v1/N + v2/(R N)`. At a fixed budget `C`
//! its variance is `V(R) / C` with `V(R) = (ρ1 + ρ2 R)(v1 + v2/R)`, which is
//! minimized at `R* = sqrt(ρ1 v2 / (ρ2 v1))` when that exceeds one.

use serde::Serialize;

use crate::error::{invalid, NcmcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibParams {
    pub v1: f64,
    pub v2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub p_differ: Option<f64>,
}

impl CalibParams {
    pub fn new(v1: f64, v2: f64, rho1: f64, rho2: f64) -> Result<Self> {
        for (name, v) in [("v1", v1), ("v2", v2), ("rho1", rho1), ("rho2", rho2)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite, got {v}")));
            }
            if v <= 0.0 {
                return Err(NcmcError::DegenerateParams(format!(
                    "{name} = {v}; all four parameters must be strictly positive"
                )));
            }
        }
        Ok(Self { v1, v2, rho1, rho2, p_differ: None })
    }

    pub fn with_p_differ(self, p: f64) -> Self {
        Self { p_differ: Some(p), ..self }
    }

    /// Cost per trunk including its replications, `ρ1 + R ρ2`.
    pub fn cost(&self, r: f64) -> f64 {
        self.rho1 + r * self.rho2
    }

    /// Variance per trunk, `v1 + v2 / R`.
    pub fn variance(&self, r: f64) -> f64 {
        self.v1 + self.v2 / r
    }

    /// `ρ1 v2 / (ρ2 v1)`; the nested estimator beats plain Monte Carlo iff
    /// this exceeds one.
    pub fn condition_ratio(&self) -> f64 {
        (self.rho1 / self.rho2) * (self.v2 / self.v1)
    }
}

/// `V(R) = (ρ1 + ρ2 R)(v1 + v2 / R)`.
pub fn v_profile(p: &CalibParams, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(invalid(format!("replication count must be at least 1, got {r}")));
    }
    Ok(p.cost(r) * p.variance(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibReport {
    pub r_star: f64,
    pub r_rounded: u64,
    /// Optimal trunk count per unit of budget, `1 / (ρ1 + ρ2 R*)`.
    pub n_star_per_budget: f64,
    pub gamma_star: f64,
    pub gain_lower: f64,
    pub gain_upper: f64,
    pub condition_holds: bool,
}

impl CalibReport {
    pub fn speed_up(&self) -> f64 {
        1.0 / self.gamma_star
    }

    /// Report used when the two rules never disagree: nesting has nothing
    /// to do, so `R* = 1` and there is no gain.
    pub fn degenerate() -> Self {
        Self {
            r_star: 1.0,
            r_rounded: 1,
            n_star_per_budget: f64::NAN,
            gamma_star: 1.0,
            gain_lower: 1.0,
            gain_upper: 1.0,
            condition_holds: false,
        }
    }
}

/// Nearest integer to `r_star`, halves rounded up, at least one.
/// Overestimating the optimum costs less than underestimating it by the
/// same amount, hence the upward tie-break.
pub fn round_replications(r_star: f64) -> u64 {
    let r = (r_star + 0.5).floor();
    if r.is_finite() && r >= 1.0 {
        r as u64
    } else {
        1
    }
}

#[allow(non_snake_case)]
pub fn optimal_R(p: &CalibParams) -> CalibReport {
    let condition_holds = p.condition_ratio() > 1.0;
    let r_star = if condition_holds { p.condition_ratio().sqrt() } else { 1.0 };
    let g = gain(p);
    let (gain_lower, gain_upper) = gain_bounds(p);
    CalibReport {
        r_star,
        r_rounded: round_replications(r_star),
        n_star_per_budget: 1.0 / p.cost(r_star),
        gamma_star: g.gamma,
        gain_lower,
        gain_upper,
        condition_holds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gain {
    /// `V(R*) / V(1)`; exactly one when nesting cannot help.
    pub gamma: f64,
    pub condition_holds: bool,
}

/// Relative variance at equal budget of the optimally nested estimator
/// against plain Monte Carlo.
pub fn gain(p: &CalibParams) -> Gain {
    if p.condition_ratio() <= 1.0 {
        return Gain { gamma: 1.0, condition_holds: false };
    }
    let a = (p.v1 / p.v2).sqrt();
    let b = (p.rho2 / p.rho1).sqrt();
    let gamma = (a + b) * (a + b) / ((1.0 + p.v1 / p.v2) * (1.0 + p.rho2 / p.rho1));
    Gain { gamma, condition_holds: true }
}

/// `(m, 4 m)` with `m = max(ρ2/(ρ1+ρ2), v1/(v1+v2))`.
pub fn gain_bounds(p: &CalibParams) -> (f64, f64) {
    let m = (p.rho2 / (p.rho1 + p.rho2)).max(p.v1 / (p.v1 + p.v2));
    (m, 4.0 * m)
}

/// Worst-case `V(R) / V(R*)` over `R ∈ [R*/α, α R*]`.
pub fn robustness_bound(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be at least 1, got {alpha}")));
    }
    Ok(0.5 + (alpha + 1.0 / alpha) / 4.0)
}

/// Integer sample counts minimizing `Σ v_i / N_i` subject to
/// `Σ N_i c_i <= budget`: `N_i ∝ sqrt(v_i / c_i)`, floored, then the leftover
/// budget is spent greedily on the largest variance reduction per unit cost.
pub fn ml_allocation(levels: &[(f64, f64)], budget: f64) -> Result<Vec<u64>> {
    if levels.is_empty() {
        return Err(invalid("at least one level is required"));
    }
    for (i, (v, c)) in levels.iter().enumerate() {
        if !(v.is_finite() && c.is_finite() && *v > 0.0 && *c > 0.0) {
            return Err(invalid(format!("level {i}: variance and cost must be positive, got ({v}, {c})")));
        }
    }
    let min_cost: f64 = levels.iter().map(|(_, c)| c).sum();
    if !(budget >= min_cost) {
        return Err(invalid(format!(
            "budget {budget} cannot pay for one sample per level (needs {min_cost})"
        )));
    }
    let scale = budget / levels.iter().map(|(v, c)| (v * c).sqrt()).sum::<f64>();
    let mut counts: Vec<u64> = levels
        .iter()
        .map(|(v, c)| ((scale * (v / c).sqrt()).floor() as u64).max(1))
        .collect();
    let spent = |counts: &[u64]| -> f64 { counts.iter().zip(levels).map(|(n, (_, c))| *n as f64 * c).sum() };
    let mut remaining = budget - spent(&counts);
    loop {
        let best = levels
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c <= remaining)
            .map(|(i, (v, c))| {
                let n = counts[i] as f64;
                (i, (v / n - v / (n + 1.0)) / c)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, _)) => {
                counts[i] += 1;
                remaining -= levels[i].1;
            }
            None => break,
        }
    }
    Ok(counts)
}

/// Path counts `(N_B, N)` for the quasi-control-variate split: `N_B` plain
/// samples of the cheap rule and `N` nested trunks with `R` replications.
/// The ratio `N_B / N = sqrt(v_B ρ(R) / (v(R) ρ_B))` does not depend on the
/// budget.
pub fn qcv_allocation(v_b: f64, rho_b: f64, p: &CalibParams, r: u64, budget: f64) -> Result<(u64, u64)> {
    if r < 1 {
        return Err(invalid("replication count must be at least 1"));
    }
    let r = r as f64;
    let counts = ml_allocation(&[(v_b, rho_b), (p.variance(r), p.cost(r))], budget)?;
    Ok((counts[0], counts[1]))
}

/// Real-valued optimal ratio `N_B / N`.
pub fn qcv_ratio(v_b: f64, rho_b: f64, p: &CalibParams, r: f64) -> f64 {
    ((v_b / p.variance(r)) * (p.cost(r) / rho_b)).sqrt()
}
