//! Least-squares regression rule with backward induction over all paths
//! (Tsitsiklis–Van Roy style).
//!
//! At every date `j < J` the continuation value is a linear combination of
//! `1`, the scaled asset prices, all their pairwise products (including
//! squares) and the scaled payoff. Coefficients come from regressing the
//! rule's value at `j + 1` on those features, and that value is carried back
//! as `max(X_j, Ĉ_j)`, using the fitted continuation rather than the
//! realized cash flow.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{exercise_now, ContinuationValue, StoppingRule};
use crate::error::{invalid, NcmcError, Result};
use crate::nested::WorkMeter;
use crate::process::{simulate_full_path, GbmModel, GbmParams, PathState, Trajectory};
use crate::rng::{Namespace, StreamKey};

/// Relative singular-value cutoff for the least-squares solve.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Constant,
    /// `1, y_d, y_d y_e (d <= e), X`.
    Quadratic,
}

impl Basis {
    pub fn len(self, d: usize) -> usize {
        match self {
            Basis::Constant => 1,
            Basis::Quadratic => 2 + d + d * (d + 1) / 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::Constant => "constant",
            Basis::Quadratic => "quadratic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "constant" => Some(Basis::Constant),
            "quadratic" => Some(Basis::Quadratic),
            _ => None,
        }
    }
}

type Features = SmallVec<[f64; 32]>;

fn features(basis: Basis, scale: f64, state: &PathState) -> Features {
    let mut f = Features::new();
    f.push(1.0);
    if basis == Basis::Quadratic {
        let inv = 1.0 / scale;
        let y: SmallVec<[f64; 8]> = state.assets.iter().map(|v| v * inv).collect();
        f.extend(y.iter().copied());
        for a in 0..y.len() {
            for b in a..y.len() {
                f.push(y[a] * y[b]);
            }
        }
        f.push(state.payoff * inv);
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub paths: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvrRule {
    d: usize,
    basis: Basis,
    scale: f64,
    /// One coefficient vector per date `0..J`.
    coeffs: Vec<Vec<f64>>,
    itm_only: bool,
    pub training: TrainingMeta,
}

impl TvrRule {
    pub fn from_coefficients(d: usize, basis: Basis, scale: f64, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("basis scale must be positive"));
        }
        let k = basis.len(d);
        for (j, c) in coeffs.iter().enumerate() {
            if c.len() != k {
                return Err(invalid(format!("date {j}: expected {k} coefficients, got {}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("date {j}: non-finite coefficient")));
            }
        }
        Ok(Self { d, basis, scale, coeffs, itm_only: false, training: TrainingMeta::default() })
    }

    /// Same fit, but never exercising at a zero payoff before maturity.
    pub fn in_the_money_only(mut self, yes: bool) -> Self {
        self.itm_only = yes;
        self
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dates(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self, j: usize) -> &[f64] {
        &self.coeffs[j]
    }

    /// Fitted continuation value; zero at and after maturity.
    pub fn continuation_value(&self, state: &PathState) -> f64 {
        let Some(beta) = self.coeffs.get(state.j) else {
            return 0.0;
        };
        let f = features(self.basis, self.scale, state);
        f.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Trains on `n_paths` fresh paths of `model` drawn from the training
    /// namespace. Paths `0..n` are shared by every call with the same seed and
    /// tag, so smaller training sets are prefixes of larger ones and rules
    /// trained under different volatilities see the same Brownian draws.
    pub fn train_on_streams(
        model: &GbmModel,
        basis: Basis,
        n_paths: usize,
        seed: u64,
        namespace: Namespace,
    ) -> Result<Self> {
        if !namespace.is_training() {
            return Err(invalid("rules must be trained on the training namespace"));
        }
        let paths: Vec<Trajectory<PathState>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| simulate_full_path(model, StreamKey::trunk(seed, namespace, i)))
            .collect();
        let mut rule = train_tvr(&paths, model.params(), basis)?;
        rule.training.seed = Some(seed);
        Ok(rule)
    }

    /// Flat text form: `#` header lines with `key=value` metadata, then one
    /// line per date holding the date index and its coefficients.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# tvr-rule v1\n");
        let _ = writeln!(
            out,
            "# d={} basis={} scale={} itm_only={} training_paths={}{}",
            self.d,
            self.basis.name(),
            self.scale,
            self.itm_only,
            self.training.paths,
            self.training
                .seed
                .map(|s| format!(" training_seed={s}"))
                .unwrap_or_default()
        );
        for (j, c) in self.coeffs.iter().enumerate() {
            let _ = write!(out, "{j}");
            for v in c {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut d = None;
        let mut basis = None;
        let mut scale = None;
        let mut itm_only = false;
        let mut meta = TrainingMeta::default();
        let mut coeffs = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let perr = |message: String| NcmcError::Parse { line: ln + 1, message };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else { continue };
                    let bad = || perr(format!("bad value for {k}: `{v}`"));
                    match k {
                        "d" => d = Some(v.parse::<usize>().map_err(|_| bad())?),
                        "basis" => basis = Some(Basis::from_name(v).ok_or_else(bad)?),
                        "scale" => scale = Some(v.parse::<f64>().map_err(|_| bad())?),
                        "itm_only" => itm_only = v.parse::<bool>().map_err(|_| bad())?,
                        "training_paths" => meta.paths = v.parse().map_err(|_| bad())?,
                        "training_seed" => meta.seed = Some(v.parse().map_err(|_| bad())?),
                        _ => {}
                    }
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| perr("expected a date index".into()))?;
            if j != coeffs.len() {
                return Err(perr(format!("expected date {}, found {j}", coeffs.len())));
            }
            let row = it
                .map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad coefficient `{t}`"))))
                .collect::<Result<Vec<f64>>>()?;
            coeffs.push(row);
        }
        let missing = |what: &str| invalid(format!("rule file is missing `{what}` in its header"));
        let mut rule = Self::from_coefficients(
            d.ok_or_else(|| missing("d"))?,
            basis.ok_or_else(|| missing("basis"))?,
            scale.ok_or_else(|| missing("scale"))?,
            coeffs,
        )?;
        rule.training = meta;
        rule.itm_only = itm_only;
        Ok(rule)
    }
}

/// Minimum-norm least squares with small singular directions discarded.
pub(crate) fn least_squares(design: DMatrix<f64>, target: DVector<f64>) -> Vec<f64> {
    let n = design.ncols();
    let qr = design.qr();
    let mut rhs = target;
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let svd = r.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return vec![0.0; n];
    }
    let top = rhs.rows(0, n).into_owned();
    svd.solve(&top, SINGULAR_CUTOFF * smax)
        .expect("both singular vector sets were computed")
        .iter()
        .copied()
        .collect()
}

/// Backward-induction regression over all training paths.
pub fn train_tvr(paths: &[Trajectory<PathState>], params: &GbmParams, basis: Basis) -> Result<TvrRule> {
    params.validate()?;
    let horizon = params.horizon();
    let k = basis.len(params.d);
    if paths.len() < k {
        return Err(invalid(format!(
            "need at least {k} training paths for this basis, got {}",
            paths.len()
        )));
    }
    for (i, p) in paths.iter().enumerate() {
        let full = p.states.len() == horizon + 1
            && p.states.iter().enumerate().all(|(j, s)| s.j == j && s.assets.len() == params.d);
        if !full {
            return Err(invalid(format!("training path {i} does not cover dates 0..={horizon}")));
        }
        if !p.key.namespace.is_training() {
            return Err(invalid(format!("training path {i} was drawn outside the training namespace")));
        }
    }
    let scale = params.y0;
    let mut value: Vec<f64> = paths.iter().map(|p| p.states[horizon].payoff).collect();
    let mut coeffs = vec![Vec::new(); horizon];
    for j in (0..horizon).rev() {
        let mut design = DMatrix::<f64>::zeros(paths.len(), k);
        for (i, p) in paths.iter().enumerate() {
            for (c, v) in features(basis, scale, &p.states[j]).into_iter().enumerate() {
                design[(i, c)] = v;
            }
        }
        let beta = least_squares(design.clone(), DVector::from_column_slice(&value));
        let fitted = &design * DVector::from_column_slice(&beta);
        for (i, p) in paths.iter().enumerate() {
            value[i] = p.states[j].payoff.max(fitted[i]);
        }
        coeffs[j] = beta;
    }
    let mut rule = TvrRule::from_coefficients(params.d, basis, scale, coeffs)?;
    rule.training.paths = paths.len();
    Ok(rule)
}

impl ContinuationValue for TvrRule {
    fn continuation(&self, state: &PathState) -> f64 {
        self.continuation_value(state)
    }

    fn in_the_money_only(&self) -> bool {
        self.itm_only
    }
}

impl StoppingRule<GbmModel> for TvrRule {
    fn stops_early(&self, _: &GbmModel, state: &PathState) -> bool {
        exercise_now(state, self.continuation_value(state), self.itm_only)
    }

    fn decision_work(&self, _: &GbmModel, state: &PathState) -> WorkMeter {
        self.continuation_work(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{simulate_full_path, Process};
    use crate::stopping::{evaluate_rule, Decision};
    use proptest::prelude::*;

    fn training_set(model: &GbmModel, n: u64, seed: u64) -> Vec<Trajectory<PathState>> {
        (0..n)
            .map(|i| simulate_full_path(model, StreamKey::trunk(seed, Namespace::Training(0), i)))
            .collect()
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(Basis::Quadratic.len(1), 4);
        assert_eq!(Basis::Quadratic.len(2), 7);
        assert_eq!(Basis::Quadratic.len(5), 22);
        assert_eq!(Basis::Constant.len(5), 1);
    }

    #[test]
    fn constant_process_stops_immediately() {
        // r = δ = σ = 0 and y0 > K: X_j = y0 - K on every path and date.
        let params = GbmParams { r: 0.0, delta: 0.0, sigma: 0.0, ..GbmParams::benchmark(2, 110.0) };
        let model = GbmModel::new(params).unwrap();
        let paths = training_set(&model, 20, 1);
        let rule = train_tvr(&paths, &params, Basis::Constant).unwrap();
        for j in 0..params.horizon() {
            assert!((rule.coefficients(j)[0] - 10.0).abs() < 1e-12);
        }
        assert_eq!(evaluate_rule(&model, &rule, &paths[0], 0).unwrap(), 0);
        // The quadratic basis is collinear here; the cutoff keeps it solvable.
        let quad = train_tvr(&paths, &params, Basis::Quadratic).unwrap();
        assert!((quad.continuation_value(&paths[3].states[4]) - 10.0).abs() < 1e-9);
        assert_eq!(evaluate_rule(&model, &quad, &paths[0], 0).unwrap(), 0);
    }

    #[test]
    fn one_period_constant_basis_is_sample_mean() {
        let params = GbmParams { dates: 2, maturity: 1.0, ..GbmParams::benchmark(2, 100.0) };
        let model = GbmModel::new(params).unwrap();
        let paths = training_set(&model, 500, 2);
        let rule = train_tvr(&paths, &params, Basis::Constant).unwrap();
        let mean: f64 = paths.iter().map(|p| p.states[1].payoff).sum::<f64>() / 500.0;
        assert!((rule.coefficients(0)[0] - mean).abs() < 1e-10);
    }

    #[test]
    fn rejects_small_or_foreign_training_sets() {
        let params = GbmParams::benchmark(2, 90.0);
        let model = GbmModel::new(params).unwrap();
        let paths = training_set(&model, 5, 1);
        assert!(train_tvr(&paths, &params, Basis::Quadratic).is_err());
        let foreign: Vec<_> = (0..10)
            .map(|i| simulate_full_path(&model, StreamKey::trunk(1, Namespace::Testing(0), i)))
            .collect();
        assert!(train_tvr(&foreign, &params, Basis::Quadratic).is_err());
        let mut short = training_set(&model, 10, 1);
        short[3].states.pop();
        assert!(train_tvr(&short, &params, Basis::Quadratic).is_err());
        assert!(TvrRule::train_on_streams(&model, Basis::Quadratic, 10, 1, Namespace::Testing(0)).is_err());
    }

    #[test]
    fn tie_at_zero_payoff_stops() {
        // Hand-set two-date rule whose fitted continuation is exactly zero.
        let params = GbmParams { dates: 2, ..GbmParams::benchmark(1, 90.0) };
        let model = GbmModel::new(params).unwrap();
        let rule = TvrRule::from_coefficients(1, Basis::Constant, 90.0, vec![vec![0.0]]).unwrap();
        let s = model.initial_state();
        assert_eq!(s.payoff, 0.0);
        assert_eq!(rule.decide(&model, &s), Decision::Stop);
        let rule = TvrRule::from_coefficients(1, Basis::Constant, 90.0, vec![vec![1e-300]]).unwrap();
        assert_eq!(rule.decide(&model, &s), Decision::Continue);
    }

    #[test]
    fn text_round_trip() {
        let params = GbmParams::benchmark(2, 90.0);
        let model = GbmModel::new(params).unwrap();
        let rule = TvrRule::train_on_streams(&model, Basis::Quadratic, 2000, 11, Namespace::Training(0)).unwrap();
        let text = rule.to_text();
        let back = TvrRule::from_text(&text).unwrap();
        assert_eq!(back, rule);
        assert!(TvrRule::from_text("0 1 2\n").is_err());
        assert!(TvrRule::from_text("# d=1 basis=constant scale=1\n1 0.5\n").is_err());
    }

    #[test]
    fn coefficient_shape_is_checked() {
        assert!(TvrRule::from_coefficients(2, Basis::Quadratic, 90.0, vec![vec![0.0; 6]]).is_err());
        assert!(TvrRule::from_coefficients(2, Basis::Quadratic, 90.0, vec![vec![f64::NAN; 7]]).is_err());
        assert!(TvrRule::from_coefficients(2, Basis::Quadratic, 0.0, vec![vec![0.0; 7]]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // Paths sharing a prefix get identical decisions up to the end of
        // the prefix.
        #[test]
        fn decisions_are_adapted(path in 0u64..1000, split in 1usize..9, rep in 1u32..50) {
            let params = GbmParams::benchmark(2, 90.0);
            let model = GbmModel::new(params).unwrap();
            let coeffs: Vec<Vec<f64>> = (0..9)
                .map(|j| (0..7).map(|c| ((j * 7 + c) as f64).sin()).collect())
                .collect();
            let rule = TvrRule::from_coefficients(2, Basis::Quadratic, 90.0, coeffs).unwrap();
            let key = StreamKey::trunk(4, Namespace::Testing(0), path);
            let full = simulate_full_path(&model, key);
            let tail = crate::process::continue_path(&model, &full.states[split], key.with_replication(rep)).unwrap();
            let mut other = full.states[..=split].to_vec();
            other.extend(tail.states);
            for j in 0..=split {
                prop_assert_eq!(rule.decide(&model, &full.states[j]), rule.decide(&model, &other[j]));
            }
        }
    }
}
