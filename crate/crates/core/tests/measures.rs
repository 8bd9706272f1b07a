mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use reflectionless::measures::{normalize_h, Atom, Density, FiniteMeasure};

proptest! {
    #[test]
    fn normalize_is_idempotent_and_order_free(sigma in common::measure(6), seed in any::<u64>()) {
        let again = normalize_h(sigma.atoms()).unwrap();
        prop_assert_eq!(&again, &sigma);
        let mut shuffled: Vec<Atom> = sigma.atoms().to_vec();
        let len = shuffled.len();
        shuffled.rotate_left((seed as usize) % len);
        if seed % 2 == 0 {
            shuffled.reverse();
        }
        prop_assert_eq!(normalize_h(&shuffled).unwrap(), sigma);
    }

    #[test]
    fn covariance_is_symmetric(sigma in common::measure(6), x in 0.0..3.0f64, y in 0.0..3.0f64) {
        let a = sigma.covariance(x, y).unwrap();
        let b = sigma.covariance(y, x).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn covariance_is_psd(sigma in common::measure(6), xs in prop::collection::vec(0.0..3.0f64, 1..=8)) {
        let k = xs.len();
        let m = DMatrix::from_fn(k, k, |i, j| {
            sigma.covariance(xs[i], xs[j]).unwrap() + if i == j { 1e-12 } else { 0.0 }
        });
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn covariance_is_additive(
        sigma in common::measure(3),
        mu in common::measure(3),
        x in 0.0..2.0f64,
        y in 0.0..2.0f64,
    ) {
        let a = FiniteMeasure::from(sigma.clone());
        let b = FiniteMeasure::from(mu.clone());
        // coinciding non-paired rates are rejected by the sum
        if let Ok(sum) = a.sum(&b) {
            let lhs = sum.covariance(x, y).unwrap();
            let rhs = sigma.covariance(x, y).unwrap() + mu.covariance(x, y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn reflection_preserves_mass_and_rate(sigma in common::measure(6)) {
        let r = sigma.reflect();
        prop_assert!((r.total_mass() - sigma.total_mass()).abs() < 1e-14);
        prop_assert_eq!(r.max_rate(), sigma.max_rate());
        prop_assert_eq!(r.reflect(), sigma);
    }
}

#[test]
fn json_round_trip() {
    let sigma = FiniteMeasure::new(
        common::atoms(&[(0.6, 0.64), (-1.0, 1.0), (1.0, 2.0)]),
        Some(Density::new(vec![-1.0, 0.0, 0.5], vec![0.25, 1.0]).unwrap()),
    );
    let text = serde_json::to_string(&sigma).unwrap();
    assert_eq!(serde_json::from_str::<FiniteMeasure>(&text).unwrap(), sigma);
}

#[test]
fn discretize_preserves_mass() {
    let sigma = FiniteMeasure::new(
        common::atoms(&[(0.3, 0.5)]),
        Some(Density::uniform(-1.0, 1.0, 0.5).unwrap()),
    );
    for n in [1, 4, 32] {
        assert!((sigma.discretize(n).unwrap().total_mass() - 1.5).abs() < 1e-13);
    }
}
