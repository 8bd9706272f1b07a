#![allow(dead_code)]

use proptest::prelude::*;
use reflectionless::measures::{normalize_h, Atom, AtomicMeasure};
use reflectionless::scattering::{ScatteringData, ScatteringEntry};

/// Measures with up to `max_n` atoms, `|p| ∈ [0.1, 1.9]` with gaps ≥ 0.05,
/// `c² ∈ [0.1, 2]`, and occasional exact `±p` pairs.
pub fn measure(max_n: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec(
        (
            0.05..0.3f64,
            any::<bool>(),
            prop::bool::weighted(0.2),
            0.1..2.0f64,
            0.1..2.0f64,
        ),
        1..=max_n,
    )
    .prop_map(move |raw| {
        let mut atoms = Vec::new();
        let mut abs = 0.05;
        for (gap, positive, paired, c2, c2_mirror) in raw {
            abs += gap;
            let p = if positive { abs } else { -abs };
            atoms.push(Atom::new(p, c2));
            if paired && atoms.len() < max_n {
                atoms.push(Atom::new(-p, c2_mirror));
            }
        }
        atoms.truncate(max_n);
        normalize_h(&atoms).unwrap()
    })
}

pub fn scattering(max_n: usize) -> impl Strategy<Value = ScatteringData> {
    prop::collection::vec((0.1..0.6f64, -2.0..3.0f64), 1..=max_n).prop_map(|raw| {
        let mut eta = 0.1;
        let entries = raw
            .into_iter()
            .map(|(gap, ln_m)| {
                eta += gap;
                ScatteringEntry { eta, m: ln_m.exp() }
            })
            .collect();
        ScatteringData::new(entries).unwrap()
    })
}

pub fn measure_rel_diff(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.atoms()
        .iter()
        .zip(b.atoms())
        .map(|(x, y)| {
            let dp = (x.p - y.p).abs() / x.p.abs().max(y.p.abs());
            let dc = (x.c2 - y.c2).abs() / x.c2.max(y.c2);
            dp.max(dc)
        })
        .fold(0.0, f64::max)
}

pub fn atoms(v: &[(f64, f64)]) -> AtomicMeasure {
    normalize_h(&v.iter().map(|&(p, c)| Atom::new(p, c)).collect::<Vec<_>>()).unwrap()
}
