//! Scattering data of reflectionless potentials and the maps between them
//! and atomic spectral measures.

mod forward;
mod inverse;
mod secular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forward::{forward_map, kappa_identity_residual};
pub use inverse::{
    inverse_map, inverse_map_with, inverse_solvers, InverseSolver, NewtonSolver, PolynomialSolver,
};
pub use secular::{characteristic_roots, secular_function, SecularRoot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringEntry {
    pub eta: f64,
    pub m: f64,
}

/// Sequence `{(η_j, m_j)}` with `0 < η_1 < … < η_n` and all `m_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScatteringJson")]
pub struct ScatteringData {
    entries: Vec<ScatteringEntry>,
}

#[derive(Deserialize)]
struct ScatteringJson {
    entries: Vec<ScatteringEntry>,
}

impl TryFrom<ScatteringJson> for ScatteringData {
    type Error = Error;
    fn try_from(raw: ScatteringJson) -> Result<Self> {
        ScatteringData::new(raw.entries)
    }
}

impl ScatteringData {
    pub fn new(entries: Vec<ScatteringEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidScatteringData("no entries".into()));
        }
        for e in &entries {
            if !(e.eta > 0.0 && e.eta.is_finite()) {
                return Err(Error::InvalidScatteringData(format!(
                    "eta must be positive and finite, got {}",
                    e.eta
                )));
            }
            if !(e.m > 0.0 && e.m.is_finite()) {
                return Err(Error::InvalidScatteringData(format!(
                    "m must be positive and finite, got {}",
                    e.m
                )));
            }
        }
        if entries.windows(2).any(|w| !(w[0].eta < w[1].eta)) {
            return Err(Error::InvalidScatteringData(
                "eta must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(eta, m)| ScatteringEntry { eta, m })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ScatteringEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eta).collect()
    }

    pub fn norming(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.m).collect()
    }

    /// Largest componentwise relative difference, `∞` if the lengths differ.
    pub fn max_relative_diff(&self, other: &ScatteringData) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                let de = (a.eta - b.eta).abs() / a.eta.abs().max(b.eta.abs());
                let dm = (a.m - b.m).abs() / a.m.abs().max(b.m.abs());
                de.max(dm)
            })
            .fold(0.0, f64::max)
    }
}

/// KdV flow on scattering data: `m_j(t) = m_j exp(−2 η_j³ t)`.
pub fn kdv_evolve(s: &ScatteringData, t: f64) -> ScatteringData {
    let entries = s
        .entries
        .iter()
        .map(|e| ScatteringEntry {
            eta: e.eta,
            m: e.m * (-2.0 * e.eta.powi(3) * t).exp(),
        })
        .collect();
    ScatteringData { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ScatteringData::from_pairs(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(ScatteringData::from_pairs(&[(2.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(ScatteringData::from_pairs(&[(1.0, 0.0)]).is_err());
        assert!(ScatteringData::from_pairs(&[(-1.0, 1.0)]).is_err());
        assert!(ScatteringData::from_pairs(&[]).is_err());
        assert!(ScatteringData::from_pairs(&[(0.5, 1.0), (1.0, 3.0)]).is_ok());
    }

    #[test]
    fn kdv_examples() {
        let s = ScatteringData::from_pairs(&[(1.0, 2.0)]).unwrap();
        assert_eq!(kdv_evolve(&s, 0.0), s);
        let s1 = kdv_evolve(&s, 1.0);
        assert!((s1.entries()[0].m - 2.0 * (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(s1.entries()[0].eta, 1.0);

        let s = ScatteringData::from_pairs(&[(2.0, 5.0)]).unwrap();
        let back = kdv_evolve(&kdv_evolve(&s, 0.37), -0.37);
        assert!(back.max_relative_diff(&s) < 1e-14);
    }

    #[test]
    fn kdv_group_law() {
        let s = ScatteringData::from_pairs(&[(0.5, 1.5), (1.2, 0.3), (2.0, 7.0)]).unwrap();
        for (t1, t2) in [(0.1, 0.2), (-0.3, 0.25), (0.7, -1.1)] {
            let a = kdv_evolve(&kdv_evolve(&s, t1), t2);
            let b = kdv_evolve(&s, t1 + t2);
            assert!(a.max_relative_diff(&b) < 1e-14);
        }
    }

    #[test]
    fn json_schema() {
        let s: ScatteringData =
            serde_json::from_str(r#"{"entries":[{"eta":1.0,"m":8.0}]}"#).unwrap();
        assert_eq!(s.entries()[0], ScatteringEntry { eta: 1.0, m: 8.0 });
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"entries":[{"eta":1.0,"m":8.0}]}"#
        );
        assert!(
            serde_json::from_str::<ScatteringData>(r#"{"entries":[{"eta":-1.0,"m":8.0}]}"#)
                .is_err()
        );
    }
}
