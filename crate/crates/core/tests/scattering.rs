mod common;

use proptest::prelude::*;
use reflectionless::scattering::{
    characteristic_roots, forward_map, inverse_map, inverse_map_with, kappa_identity_residual,
    NewtonSolver,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn measure_round_trip(sigma in common::measure(6)) {
        let back = inverse_map(&forward_map(&sigma).unwrap()).unwrap();
        let d = common::measure_rel_diff(&sigma, &back);
        prop_assert!(d <= 1e-8, "relative difference {d}");
    }

    #[test]
    fn scattering_round_trip(s in common::scattering(6)) {
        let back = forward_map(&inverse_map(&s).unwrap()).unwrap();
        prop_assert!(s.max_relative_diff(&back) <= 1e-8);
    }

    #[test]
    fn roots_interlace_distinct_poles(sigma in common::measure(6)) {
        let mut poles: Vec<f64> = sigma.atoms().iter().map(|a| a.p * a.p).collect();
        poles.sort_by(f64::total_cmp);
        poles.dedup();
        let roots = characteristic_roots(&sigma).unwrap();
        prop_assert_eq!(roots.len(), poles.len());
        for (i, r) in roots.iter().enumerate() {
            prop_assert!(r.value > poles[i]);
            if i + 1 < poles.len() {
                prop_assert!(r.value < poles[i + 1]);
            }
        }
    }

    #[test]
    fn forward_output_is_ordered_and_positive(sigma in common::measure(6)) {
        let s = forward_map(&sigma).unwrap();
        prop_assert!(s.entries().iter().all(|e| e.m > 0.0 && e.m.is_finite()));
        prop_assert!(s.etas().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn algebraic_spectral_bound(sigma in common::measure(6)) {
        let s = forward_map(&sigma).unwrap();
        let top = s.etas().iter().map(|e| e * e).fold(0.0, f64::max);
        prop_assert!(top <= sigma.max_rate().powi(2) + sigma.total_mass() + 1e-12);
    }

    #[test]
    fn kappa_identity(sigma in common::measure(6), z in -3.0..8.0f64) {
        let s = forward_map(&sigma).unwrap();
        prop_assert!(kappa_identity_residual(&sigma, &s, z) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn newton_solver_round_trip(sigma in common::measure(4)) {
        let s = forward_map(&sigma).unwrap();
        let back = inverse_map_with(&NewtonSolver::default(), &s).unwrap();
        prop_assert!(forward_map(&back).unwrap().max_relative_diff(&s) <= 1e-8);
    }
}

#[test]
fn two_atom_roots() {
    let sigma = common::atoms(&[(1.0, 1.0), (2.0, 1.0)]);
    let r: Vec<f64> = characteristic_roots(&sigma)
        .unwrap()
        .iter()
        .map(|r| r.value)
        .collect();
    let d = 13f64.sqrt();
    assert!((r[0] - (7.0 - d) / 2.0).abs() < 1e-13);
    assert!((r[1] - (7.0 + d) / 2.0).abs() < 1e-13);
}
