//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 3 7`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ncmc_core::calibration::{ml_allocation, optimal_R, gain, robustness_bound, v_profile, CalibParams};
use ncmc_core::experiments::{
    multilevel_estimate, param_uncertainty_study, qcv_estimate, MultilevelConfig, MultilevelMethod, ParamStudyConfig,
    QcvConfig, QcvMethod,
};
use ncmc_core::nested::{estimate, NestedConfig};
use ncmc_core::oracle::exact_components;
use ncmc_core::process::tree::{Mark, TWO_PERIOD_TREE};
use ncmc_core::process::{simulate_full_path, GbmModel, GbmParams, TreeModel};
use ncmc_core::rng::{Namespace, StreamKey};
use ncmc_core::stopping::TreeRule;
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use statrs::distribution::{ContinuousCDF, Normal};

/// Outcome of one criterion: pass flag and a one-line summary of the numbers.
type Verdict = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Verdict,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn two_period() -> (TreeModel, TreeRule, TreeRule) {
    (TreeModel::parse(TWO_PERIOD_TREE).unwrap(), TreeRule::Marked(Mark::A), TreeRule::Marked(Mark::B))
}

fn oracle_unbiasedness() -> Verdict {
    let (tree, a, b) = two_period();
    let exact = exact_components(&tree, &a, &b).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = vec![format!("exact {:.6}", exact.delta)];
    for (i, r) in [1usize, 5, 20].into_iter().enumerate() {
        let cfg = NestedConfig::new(100_000, r, 2024).in_namespace(Namespace::Testing(i as u32));
        let est = estimate(&tree, &a, &b, &cfg).map_err(|e| e.to_string())?;
        let z = (est.delta_hat - exact.delta) / est.stderr;
        ok &= z.abs() < 4.0;
        parts.push(format!("R={r} z={z:+.2}"));
    }
    Ok((ok, parts.join(", ")))
}

fn variance_law() -> Verdict {
    let (tree, a, b) = two_period();
    let exact = exact_components(&tree, &a, &b).map_err(|e| e.to_string())?;
    let n = 2_000usize;
    let seeds = 200u64;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [1usize, 4, 16] {
        let draws = (0..seeds)
            .map(|s| estimate(&tree, &a, &b, &NestedConfig::new(n, r, 50_000 + s)).map(|e| e.delta_hat))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        let m = draws.iter().sum::<f64>() / seeds as f64;
        let var = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (seeds - 1) as f64;
        let law = exact.v1 / n as f64 + exact.v2 / (r * n) as f64;
        let ratio = var / law;
        ok &= (ratio - 1.0).abs() < 0.25;
        parts.push(format!("R={r} ratio={ratio:.3}"));
    }
    Ok((ok, parts.join(", ")))
}

fn params_strategy() -> impl Strategy<Value = CalibParams> {
    (-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0)
        .prop_map(|(a, b, c, d)| CalibParams::new(10f64.powf(c), 10f64.powf(d), 10f64.powf(a), 10f64.powf(b)).unwrap())
}

fn runner() -> TestRunner {
    TestRunner::new(RunnerConfig {
        cases: 10_000,
        max_global_rejects: 1_000_000,
        failure_persistence: None,
        ..RunnerConfig::default()
    })
}

fn calibration_algebra() -> Verdict {
    let col4 = CalibParams::new(0.061, 16.066, 7.972, 0.199).map_err(|e| e.to_string())?;
    let col1 = CalibParams::new(0.008, 4.023, 7.975, 0.053).map_err(|e| e.to_string())?;
    let r_star = optimal_R(&col4).r_star;
    let gamma = gain(&col1).gamma;
    let b12 = robustness_bound(1.2).map_err(|e| e.to_string())?;
    let b2 = robustness_bound(2.0).map_err(|e| e.to_string())?;
    let mut ok = rel(r_star, 102.7) <= 0.02 && rel(gamma, 0.016) <= 0.05;
    ok &= (b12 - 1.00833).abs() <= 1e-5 && b2 == 1.125;

    let reflection = runner()
        .run(&(params_strategy(), 1.0f64..10.0), |(q, alpha)| {
            let rep = optimal_R(&q);
            prop_assume!(rep.condition_holds && rep.r_star / alpha >= 1.0);
            let up = v_profile(&q, alpha * rep.r_star).unwrap();
            let down = v_profile(&q, rep.r_star / alpha).unwrap();
            prop_assert!(rel(up, down) < 1e-10, "{up} vs {down}");
            Ok(())
        })
        .map_err(|e| format!("reflection identity: {e}"));

    // Strict inequalities; where the exact gap is below double precision we
    // only require that rounding did not flip the sign.
    let inequalities = runner()
        .run(&(params_strategy(), 0.01f64..0.99), |(q, u)| {
            let rep = optimal_R(&q);
            prop_assume!(rep.condition_holds);
            let base = v_profile(&q, 1.0).unwrap();
            let r = (2.0 * u * rep.r_star.ln()).exp();
            let gap = q.rho2 * q.v1 * (r - 1.0) * (rep.r_star * rep.r_star / r - 1.0);
            prop_assert!(v_profile(&q, r).unwrap() < base || gap < 1e-12 * base, "improvement region");
            if rep.r_star > 2.0 {
                let h = u * (rep.r_star - 1.0);
                let hi = v_profile(&q, rep.r_star + h).unwrap();
                let lo = v_profile(&q, rep.r_star - h).unwrap();
                let gap = 2.0 * h * q.rho2 * q.v1 * (rep.r_star * rep.r_star / (rep.r_star * rep.r_star - h * h) - 1.0);
                prop_assert!(hi < lo || gap < 1e-12 * lo, "overshoot vs undershoot");
            }
            if rep.r_rounded > 1 {
                let r = rep.r_rounded as f64;
                let gap = q.rho2 * q.v1 * (r - 1.0) * (rep.r_star * rep.r_star / r - 1.0);
                prop_assert!(v_profile(&q, r).unwrap() < base || gap < 1e-12 * base, "rounded optimum");
            }
            Ok(())
        })
        .map_err(|e| format!("replication-count inequalities: {e}"));

    let mut summary = format!("R*={r_star:.2} gamma={gamma:.5} bound(1.2)={b12:.6} bound(2)={b2}");
    for res in [reflection, inequalities] {
        if let Err(e) = res {
            ok = false;
            summary.push_str(&format!("; {e}"));
        }
    }
    if ok {
        summary.push_str("; 2 x 10^4 random draws passed");
    }
    Ok((ok, summary))
}

fn param_study() -> Verdict {
    let report = param_uncertainty_study(&ParamStudyConfig::default()).map_err(|e| e.to_string())?;
    let find = |offset: f64| report.rows.iter().find(|r| (r.offset - offset).abs() < 1e-12);
    let (Some(small), Some(mid)) = (find(0.005), find(0.01)) else {
        return Err("default offsets must include 0.005 and 0.01".into());
    };
    let mean = report.reference.mean;
    let mid_speed = mid.measured_speed_up.unwrap_or(0.0);
    let small_speed = small.measured_speed_up.unwrap_or(0.0);
    let ok = (mean - 8.042).abs() <= 0.05
        && (mid.delta_hat - 0.026).abs() <= 0.01
        && (mid.pilot.p_differ - 0.043).abs() <= 0.015
        && (130.0..=220.0).contains(&mid.calibration.r_star)
        && mid_speed >= 20.0
        && small_speed >= 35.0;
    Ok((
        ok,
        format!(
            "E[X]={mean:.4}; offset 0.01: delta={:.4} P={:.4} R*={:.1} speed-up={mid_speed:.1}; offset 0.005: speed-up={small_speed:.1}",
            mid.delta_hat, mid.pilot.p_differ, mid.calibration.r_star
        ),
    ))
}

fn qcv() -> Verdict {
    let report = qcv_estimate(&QcvConfig::default()).map_err(|e| e.to_string())?;
    let simple = report.row(QcvMethod::Simple);
    let single = report.row(QcvMethod::QuasiControl);
    let nested = report.row(QcvMethod::QuasiControlNested);
    let mu_b = single.control_mean;
    let gamma = report.calibration.gamma_star;
    let measured = report.measured_gain.unwrap_or(f64::INFINITY);
    let ok = (mu_b - 11.224).abs() <= 0.05
        && single.variance < simple.variance / 3.0
        && nested.variance < single.variance / 3.0
        && measured <= 2.0 * gamma
        && measured >= gamma / 2.0;
    Ok((
        ok,
        format!(
            "mu_B={mu_b:.4}; Var simple={:.3e} qcv={:.3e} qcv+nested={:.3e}; gain measured={measured:.4} predicted={gamma:.4}",
            simple.variance, single.variance, nested.variance
        ),
    ))
}

fn multilevel() -> Verdict {
    let n = ml_allocation(&[(251.3, 1.0), (6.556, 28.0), (0.128, 397.5)], 200_000.0).map_err(|e| e.to_string())?;
    let alloc_ok = n.iter().zip([86_780.0, 2_650.0, 100.0]).all(|(&k, want)| rel(k as f64, want) <= 0.02 + 1e-12);
    let report = multilevel_estimate(&MultilevelConfig::default()).map_err(|e| e.to_string())?;
    let simple = report.row(MultilevelMethod::Simple).variance;
    let ml = report.row(MultilevelMethod::Multilevel).variance;
    let nested = report.row(MultilevelMethod::MultilevelNested).variance;
    let ok = alloc_ok && report.telescoping_z.abs() < 3.0 && nested < ml && ml < simple;
    Ok((
        ok,
        format!(
            "allocation {n:?}; telescoping z={:.2}; Var simple={simple:.3e} ml={ml:.3e} ml+nested={nested:.3e}",
            report.telescoping_z
        ),
    ))
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ncmc"))
        .args(args)
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Verdict {
    let runs: &[(&str, &[&str])] = &[
        (
            "estimate",
            &[
                "estimate",
                "--seed",
                "5",
                "-s",
                "rules.a.training_paths=2000",
                "-s",
                "rules.b.training_paths=2000",
                "-s",
                "rules.b.sigma=0.22",
                "-s",
                "pilot.trunks=2000",
                "-s",
                "estimate.budget=300000",
                "-s",
                "estimate.replications=1,8",
            ],
        ),
        ("oracle-check", &["oracle-check", "--seed", "5", "-s", "model.kind=tree", "-s", "oracle.trunks=20000"]),
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut checked = 0;
    for (name, args) in runs {
        let dirs: Vec<_> = ["first", "again", "eight"].iter().map(|d| tmp.path().join(format!("{name}-{d}"))).collect();
        run_cli(&dirs[0], 1, args)?;
        run_cli(&dirs[1], 1, args)?;
        run_cli(&dirs[2], 8, args)?;
        for ext in ["csv", "json"] {
            let read = |d: &Path| std::fs::read(d.join(format!("{name}.{ext}"))).map_err(|e| e.to_string());
            let base = read(&dirs[0])?;
            ok &= base == read(&dirs[1])? && base == read(&dirs[2])?;
            checked += 1;
        }
    }
    Ok((ok, format!("{checked} output files compared across repeat and 1 vs 8 threads")))
}

fn ks_p_value(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

fn gbm_distribution() -> Verdict {
    let params = GbmParams::benchmark(1, 100.0);
    let model = GbmModel::new(params).map_err(|e| e.to_string())?;
    let dt = params.dt();
    let law = Normal::new((params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt, params.sigma * dt.sqrt())
        .map_err(|e| e.to_string())?;
    let growth = (-(params.r - params.delta) * params.maturity).exp();
    let n = 1_000_000u64;
    let mut returns = Vec::with_capacity(100_000);
    let mut terminal = Vec::with_capacity(n as usize);
    for i in 0..n {
        let path = simulate_full_path(&model, StreamKey::trunk(77, Namespace::Testing(0), i));
        if i < 100_000 {
            returns.push((path.states[3].assets[0] / path.states[2].assets[0]).ln());
        }
        terminal.push(growth * path.states.last().unwrap().assets[0]);
    }
    let p = ks_p_value(returns, |x| law.cdf(x));
    let m = terminal.iter().sum::<f64>() / n as f64;
    let var = terminal.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    let z = (m - params.y0) / (var / n as f64).sqrt();
    Ok((p > 0.01 && z.abs() < 3.0, format!("KS p={p:.3}; martingale z={z:+.2}")))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "oracle unbiasedness", limit: Some(Duration::from_secs(10)), run: oracle_unbiasedness },
        Criterion { id: 2, name: "variance law", limit: Some(Duration::from_secs(120)), run: variance_law },
        Criterion { id: 3, name: "calibration algebra", limit: Some(Duration::from_secs(1)), run: calibration_algebra },
        Criterion { id: 4, name: "volatility misspecification study", limit: None, run: param_study },
        Criterion { id: 5, name: "quasi control variate", limit: Some(Duration::from_secs(600)), run: qcv },
        Criterion { id: 6, name: "multilevel", limit: Some(Duration::from_secs(600)), run: multilevel },
        Criterion { id: 7, name: "determinism", limit: Some(Duration::from_secs(60)), run: determinism },
        Criterion { id: 8, name: "GBM distribution", limit: Some(Duration::from_secs(30)), run: gbm_distribution },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let verdict = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let (pass, detail) = match verdict {
            Ok((pass, detail)) => (pass && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = match c.limit {
            Some(l) if !in_time => format!("{:.1} s, over the {} s limit", elapsed.as_secs_f64(), l.as_secs()),
            _ => format!("{:.1} s", elapsed.as_secs_f64()),
        };
        println!("{} {}. {}: {detail} ({timing})", if pass { "PASS" } else { "FAIL" }, c.id, c.name);
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
