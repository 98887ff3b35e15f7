mod common;

use common::binomial_se;
use noisy_proxy::adaptive::{
    adaptive_test, bootstrap_upper_bound, estimate_psi, BootstrapConfig, BootstrapMethod, InnerTest,
};
use noisy_proxy::harness::{run_calibration_experiment, ExperimentConfig, MuGrid, MuPrimeRule};
use noisy_proxy::location::{naive_test, weighted_test, Branch, TestKind};
use noisy_proxy::model::{generate_dataset, pitman_efficiency, Dataset, ModelParams, ProxySpec};
use noisy_proxy::statdist::RngStream;
use noisy_proxy::working_mle::{wtd_plus_test, EmConfig};
use rayon::prelude::*;

fn augmented(proxy: ProxySpec, mu: f64, mu_prime: f64, n: usize, stream: &RngStream) -> Dataset {
    let params = ModelParams::new(mu, 0.3, proxy).unwrap().with_positive_control(mu_prime).unwrap();
    generate_dataset(&params, n, stream).unwrap()
}

fn boot(stream: RngStream) -> BootstrapConfig {
    BootstrapConfig::new(stream)
}

#[test]
fn upper_bound_covers_psi() {
    let psi = pitman_efficiency(&ProxySpec::pos2(), 0.3).unwrap().psi;
    let reps = 2000u64;
    // The reflected bound inherits the right skew of the ratio estimate and
    // under-covers at this n (about 0.90); the percentile bound does not.
    for (method, floor) in [(BootstrapMethod::Percentile, 0.93), (BootstrapMethod::Basic, 0.88)] {
        let covered = (0..reps)
            .into_par_iter()
            .filter(|&rep| {
                let d = augmented(ProxySpec::pos2(), 0.0, 2.0, 500, &RngStream::with_path(5, &[rep, 0]));
                let cfg = BootstrapConfig {
                    method,
                    ..boot(RngStream::with_path(5, &[rep, 1]))
                };
                psi <= bootstrap_upper_bound(d.gamma(), d.y_prime().unwrap(), &cfg).unwrap().value
            })
            .count();
        let rate = covered as f64 / reps as f64;
        assert!(rate >= floor, "{method}: coverage {rate}");
    }
}

#[test]
fn large_samples_pick_the_better_test() {
    let reps = 100u64;
    for (proxy, optimal) in [(ProxySpec::hvar(), Branch::Naive), (ProxySpec::pos2(), Branch::Weighted)] {
        let hits = (0..reps)
            .into_par_iter()
            .filter(|&rep| {
                let d = augmented(proxy.clone(), 0.0, 2.0, 10_000, &RngStream::with_path(6, &[rep, 0]));
                let cfg = boot(RngStream::with_path(6, &[rep, 1]));
                bootstrap_upper_bound(d.gamma(), d.y_prime().unwrap(), &cfg).unwrap().branch() == optimal
            })
            .count();
        assert!(hits as f64 >= 0.95 * reps as f64, "{}: {hits} of {reps}", proxy.label);
    }
}

#[test]
fn wide_bootstrap_defaults_to_weighting() {
    // Unif has psi < 1, so a point-estimate rule would pick naive most often.
    let reps = 500u64;
    let (mut bound_rule, mut point_rule) = (0, 0);
    for rep in 0..reps {
        let d = augmented(ProxySpec::unif(), 0.0, 1.0, 50, &RngStream::with_path(8, &[rep, 0]));
        let cfg = boot(RngStream::with_path(8, &[rep, 1]));
        let ub = bootstrap_upper_bound(d.gamma(), d.y_prime().unwrap(), &cfg).unwrap();
        bound_rule += (ub.branch() == Branch::Weighted) as usize;
        let psi_hat = estimate_psi(d.gamma(), d.y_prime().unwrap()).unwrap().psi_hat;
        point_rule += !(psi_hat < 1.0) as usize;
    }
    assert!(bound_rule > point_rule, "{bound_rule} vs {point_rule}");
    assert!(bound_rule as f64 > 0.5 * reps as f64);
}

#[test]
fn forced_branches_reproduce_the_chosen_test() {
    let em = EmConfig::default();
    // large n with independent proxies: the bound sits well below one
    let d = augmented(ProxySpec::hvar(), 0.05, 3.0, 20_000, &RngStream::new(1));
    for inner in [InnerTest::Weighted, InnerTest::WeightedPlus] {
        let out = adaptive_test(d.y(), d.gamma(), d.y_prime(), 0.05, &boot(RngStream::new(2)), &em, inner).unwrap();
        assert!(out.bound.value < 1.0);
        let naive = naive_test(d.y(), 0.05).unwrap();
        assert_eq!(out.result.branch, Some(Branch::Naive));
        assert_eq!((out.result.statistic, out.result.reject), (naive.statistic, naive.reject));
    }
    // strongly informative proxies: the bound sits above one
    let d = augmented(ProxySpec::pos2(), 0.3, 3.0, 2000, &RngStream::new(3));
    let out = adaptive_test(d.y(), d.gamma(), d.y_prime(), 0.05, &boot(RngStream::new(4)), &em, InnerTest::Weighted).unwrap();
    assert!(out.bound.value >= 1.0);
    assert_eq!(out.result.test, TestKind::AdaptiveWeighted);
    assert_eq!(out.result.statistic, weighted_test(d.y(), d.gamma(), 0.05).unwrap().statistic);
    let out = adaptive_test(d.y(), d.gamma(), d.y_prime(), 0.05, &boot(RngStream::new(4)), &em, InnerTest::WeightedPlus).unwrap();
    assert_eq!(out.result.statistic, wtd_plus_test(d.y(), d.gamma(), 0.05, &em).unwrap().statistic);
}

#[test]
fn adaptive_tests_keep_their_level() {
    let alpha = 0.05;
    let reps = 100_000;
    let config = ExperimentConfig {
        proxy_specs: vec![ProxySpec::unif(), ProxySpec::pos1()],
        alpha,
        reps,
        tests: vec![TestKind::AdaptiveWeighted, TestKind::AdaptiveWeightedPlus],
        mu_prime_rule: MuPrimeRule::Delta(5.0),
        ..ExperimentConfig::new(vec![0.3], vec![75], MuGrid::Absolute(vec![0.0]), 17)
    };
    let table = run_calibration_experiment(&config).unwrap();
    let limit = alpha + 3.0 * binomial_se(alpha, reps);
    for r in &table.rows {
        assert!(r.reject_rate <= limit, "{} {}: {}", r.proxy_label, r.test, r.reject_rate);
    }
}
