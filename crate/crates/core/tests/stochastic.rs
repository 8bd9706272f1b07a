mod common;

use reflectionless::measures::{Density, FiniteMeasure};
use reflectionless::stochastic::{
    estimate_log_phi, estimate_phi_derivatives, mean_sd, pair_kernel, simulate_ou, simulate_sheet,
    CompoundOUSpec, MCConfig,
};

fn z_of(products: &[f64], exact: f64) -> f64 {
    let (m, sd) = mean_sd(products);
    (m - exact) / (sd / (products.len() as f64).sqrt())
}

#[test]
fn atomic_covariance_oracle() {
    let sigma = common::atoms(&[(0.6, 0.64), (-1.0, 0.5), (1.0, 0.3)]);
    let n = 20_000;
    let paths = simulate_ou(&sigma, 2.0, 0.5, n, 5, false).unwrap();
    for i in 1..=4 {
        for j in i..=4 {
            let (xi, xj) = (paths.at(i), paths.at(j));
            let prod: Vec<f64> = xi.iter().zip(&xj).map(|(a, b)| a * b).collect();
            let exact = sigma.covariance(0.5 * i as f64, 0.5 * j as f64).unwrap();
            assert!(z_of(&prod, exact).abs() <= 3.0, "({i}, {j})");
        }
    }
}

#[test]
fn density_covariance_oracle() {
    let f = Density::uniform(-1.0, 1.0, 0.5).unwrap();
    let spec = CompoundOUSpec::from_density(&f, 16).unwrap();
    let n = 20_000;
    let paths = simulate_sheet(&spec, 2.0, 0.5, n, 9).unwrap();
    for i in 1..=4 {
        for j in i..=4 {
            let prod: Vec<f64> = paths
                .at(i)
                .iter()
                .zip(&paths.at(j))
                .map(|(a, b)| a * b)
                .collect();
            let exact = spec.covariance(0.5 * i as f64, 0.5 * j as f64);
            assert!(z_of(&prod, exact).abs() <= 3.0, "({i}, {j})");
        }
    }
}

#[test]
fn companion_shares_noise() {
    let sigma = common::atoms(&[(0.6, 0.64), (-1.0, 0.5)]);
    let paths = simulate_ou(&sigma, 1.0, 0.25, 40_000, 3, true).unwrap();
    let companion = paths.companion_values.as_ref().unwrap();
    let k = 4;
    let prod: Vec<f64> = paths
        .values
        .iter()
        .zip(companion)
        .map(|(x, xt)| x[k] * xt[k])
        .collect();
    // independent strips: E[X X̃] = Σ c_j² p_j Var ξ_j
    let exact: f64 = sigma
        .atoms()
        .iter()
        .map(|a| a.c2 * a.p * pair_kernel(a.p, a.p, 1.0, 1.0))
        .sum();
    assert!(z_of(&prod, exact).abs() <= 3.0);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let sigma = FiniteMeasure::from(common::atoms(&[(0.6, 0.64), (-1.0, 0.5)]));
    let cfg = MCConfig {
        n_paths: 3000,
        dt: 1e-2,
        t: 1.0,
        seed: 17,
        q_grid: 8,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            (
                estimate_log_phi(&sigma, &[0.5, 1.0], &cfg).unwrap(),
                estimate_phi_derivatives(&sigma, &[1.0], &cfg).unwrap(),
            )
        })
    };
    let (a, da) = run(1);
    let (b, db) = run(4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.stderr.to_bits(), y.stderr.to_bits());
    }
    assert_eq!(da[0].1.value.to_bits(), db[0].1.value.to_bits());
}

#[test]
fn identity_on_a_small_measure() {
    let sigma = common::atoms(&[(0.6, 0.64), (-0.3, 1.2)]);
    let cfg = MCConfig {
        n_paths: 20_000,
        t: 1.0,
        seed: 23,
        ..MCConfig::default()
    };
    let est = estimate_log_phi(&FiniteMeasure::from(sigma.clone()), &[0.5, 1.0], &cfg).unwrap();
    for (x, e) in [0.5, 1.0].iter().zip(&est) {
        let exact = reflectionless::potential::log_phi_closed(&sigma, *x).unwrap();
        assert!((e.value - exact).abs() <= 3.0 * e.stderr, "x = {x}");
    }
}

#[test]
fn negative_grid_point_is_rejected() {
    let sigma = FiniteMeasure::from(common::atoms(&[(0.0, 1.0)]));
    let cfg = MCConfig {
        n_paths: 10,
        ..MCConfig::default()
    };
    assert!(estimate_log_phi(&sigma, &[-0.5], &cfg).is_err());
    assert!(estimate_log_phi(&sigma, &[0.0005], &cfg).is_err());
}

#[test]
fn spec_types_survive_json() {
    let spec =
        CompoundOUSpec::from_density(&Density::uniform(-1.0, 1.0, 0.5).unwrap(), 32).unwrap();
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<CompoundOUSpec>(&text).unwrap(), spec);
    let cfg = MCConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<MCConfig>(&text).unwrap(), cfg);
    let s = reflectionless::scattering::forward_map(&common::atoms(&[(0.6, 0.64), (-1.0, 0.3)]))
        .unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(
        serde_json::from_str::<reflectionless::scattering::ScatteringData>(&text).unwrap(),
        s
    );
}
