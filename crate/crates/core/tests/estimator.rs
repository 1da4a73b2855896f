use ncmc_core::nested::{estimate, pilot, NestedConfig};
use ncmc_core::oracle::exact_components;
use ncmc_core::process::tree::{Mark, TWO_PERIOD_TREE};
use ncmc_core::process::{GbmModel, GbmParams, TreeModel};
use ncmc_core::rng::Namespace;
use ncmc_core::stopping::{Basis, TreeRule, TvrRule};

fn two_period() -> (TreeModel, TreeRule, TreeRule) {
    (
        TreeModel::parse(TWO_PERIOD_TREE).unwrap(),
        TreeRule::Marked(Mark::A),
        TreeRule::Marked(Mark::B),
    )
}

#[test]
fn unbiased_on_the_tree() {
    let (tree, a, b) = two_period();
    let exact = exact_components(&tree, &a, &b).unwrap();
    for r in [1, 5, 20] {
        let est = estimate(&tree, &a, &b, &NestedConfig::new(100_000, r, 17)).unwrap();
        assert!(
            (est.delta_hat - exact.delta).abs() < 4.0 * est.stderr,
            "R={r}: {} vs {} ± {}",
            est.delta_hat,
            exact.delta,
            est.stderr
        );
        let predicted = exact.v1 / 1e5 + exact.v2 / (r as f64 * 1e5);
        assert!((est.variance() / predicted - 1.0).abs() < 0.1, "R={r}");
    }
}

#[test]
fn variance_follows_the_two_component_law() {
    let (tree, a, b) = two_period();
    let exact = exact_components(&tree, &a, &b).unwrap();
    let n = 2_000;
    for r in [1, 4, 16] {
        let draws: Vec<f64> = (0..200u64)
            .map(|seed| estimate(&tree, &a, &b, &NestedConfig::new(n, r, 1000 + seed)).unwrap().delta_hat)
            .collect();
        let m = draws.iter().sum::<f64>() / 200.0;
        let var = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / 199.0;
        let law = exact.v1 / n as f64 + exact.v2 / (r * n) as f64;
        assert!((var / law - 1.0).abs() < 0.25, "R={r}: {var} vs {law}");
    }
}

#[test]
fn pilot_recovers_exact_components() {
    let (tree, a, b) = two_period();
    let exact = exact_components(&tree, &a, &b).unwrap();
    let p = pilot(&tree, &a, &b, 200_000, 10, 5, Namespace::Pilot(0)).unwrap();
    assert!((p.v1 / exact.v1 - 1.0).abs() < 0.1, "{} vs {}", p.v1, exact.v1);
    assert!((p.v2 / exact.v2 - 1.0).abs() < 0.1, "{} vs {}", p.v2, exact.v2);
    assert!((p.p_differ - 0.5).abs() < 0.01);
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let params = GbmParams::benchmark(2, 90.0);
    let model = GbmModel::new(params).unwrap();
    let a = TvrRule::train_on_streams(&model, Basis::Quadratic, 2_000, 3, Namespace::Training(0)).unwrap();
    let mis = GbmModel::new(params.with_sigma(0.25)).unwrap();
    let b = TvrRule::train_on_streams(&mis, Basis::Quadratic, 2_000, 3, Namespace::Training(0)).unwrap();
    let cfg = NestedConfig::new(20_000, 7, 11);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate(&model, &a, &b, &cfg).unwrap())
    };
    let one = run(1);
    let many = run(8);
    assert_eq!(one.delta_hat.to_bits(), many.delta_hat.to_bits());
    assert_eq!(one.stderr.to_bits(), many.stderr.to_bits());
    assert_eq!(one, many);
}

#[test]
fn reported_stderr_matches_own_components() {
    let (tree, a, b) = two_period();
    let est = estimate(&tree, &a, &b, &NestedConfig::new(5_000, 6, 2)).unwrap();
    let (v1, v2) = (est.v1_hat.unwrap(), est.v2_hat.unwrap());
    let law = (v1 / 5_000.0 + v2 / 30_000.0).sqrt();
    assert!((est.stderr - law).abs() <= 1e-15 * law);
}
