use super::secular::{merged_poles, roots_of_poles, Pole};
use super::{ScatteringData, ScatteringEntry};
use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, PairRole};

/// Running product kept as `mantissa · e^{log_scale}` so long products of
/// ratios neither overflow nor underflow.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledProduct {
    mantissa: f64,
    log_scale: f64,
}

impl ScaledProduct {
    pub fn new(v: f64) -> Self {
        Self {
            mantissa: v,
            log_scale: 0.0,
        }
    }

    pub fn mul(&mut self, v: f64) {
        self.mantissa *= v;
        let a = self.mantissa.abs();
        if a > 1e150 || (a < 1e-150 && a > 0.0) {
            self.log_scale += a.ln();
            self.mantissa = self.mantissa.signum();
        }
    }

    pub fn div(&mut self, v: f64) {
        self.mul(1.0 / v)
    }

    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.log_scale
    }

    pub fn signum(&self) -> f64 {
        self.mantissa.signum()
    }

    pub fn value(&self) -> f64 {
        if self.log_scale == 0.0 {
            self.mantissa
        } else {
            self.mantissa * self.log_scale.exp()
        }
    }
}

/// An η value carried together with its anchor pole and offset
/// (`η² = P_anchor + offset`).
#[derive(Debug, Clone, Copy)]
struct Eta {
    value: f64,
    anchor: usize,
    offset: f64,
    /// index of the positive atom of the pair this η comes from
    pair: Option<usize>,
}

fn sq_gap(poles: &[Pole], a: usize, off_a: f64, b: usize, off_b: f64) -> f64 {
    let base = if a == b {
        0.0
    } else {
        let (x, y) = (poles[a].abs_p, poles[b].abs_p);
        (x - y) * (x + y)
    };
    base + off_a - off_b
}

/// The forward map `σ ↦ {η_j, m_j}`.
pub fn forward_map(sigma: &AtomicMeasure) -> Result<ScatteringData> {
    if sigma.is_empty() {
        return Err(Error::InvalidMeasure("empty measure".into()));
    }
    let poles = merged_poles(sigma)?;
    let atoms = sigma.atoms();
    // pole index of every atom
    let mut atom_pole = Vec::with_capacity(atoms.len());
    let mut next = 0;
    for j in 0..atoms.len() {
        match sigma.pair_role(j) {
            Some(PairRole::Negative) => atom_pole.push(next - 1),
            _ => {
                atom_pole.push(next);
                next += 1;
            }
        }
    }

    let mut etas: Vec<Eta> = sigma
        .pairing()
        .iter()
        .map(|&j| Eta {
            value: atoms[j].p,
            anchor: atom_pole[j],
            offset: 0.0,
            pair: Some(j),
        })
        .collect();
    etas.extend(roots_of_poles(&poles).into_iter().map(|r| Eta {
        value: r.value.sqrt(),
        anchor: r.anchor,
        offset: r.offset,
        pair: None,
    }));
    etas.sort_by(|a, b| a.value.total_cmp(&b.value));

    // η − |p_l| for atom l, from the squared gap
    let eta_minus_abs_p = |e: &Eta, l: usize| -> f64 {
        let pl = atom_pole[l];
        sq_gap(&poles, e.anchor, e.offset, pl, 0.0) / (e.value + poles[pl].abs_p)
    };
    // (p_l + η) / (p_l − η)
    let atom_ratio = |e: &Eta, l: usize| -> f64 {
        let p = atoms[l].p;
        let d = eta_minus_abs_p(e, l);
        if p >= 0.0 {
            (p + e.value) / -d
        } else {
            d / (p - e.value)
        }
    };

    let mut entries = Vec::with_capacity(etas.len());
    for (i, e) in etas.iter().enumerate() {
        let mut prod = ScaledProduct::new(2.0 * e.value);
        for (k, ek) in etas.iter().enumerate() {
            if k == i {
                continue;
            }
            let diff =
                sq_gap(&poles, ek.anchor, ek.offset, e.anchor, e.offset) / (ek.value + e.value);
            prod.mul((ek.value + e.value) / diff);
        }
        match e.pair {
            Some(j) => {
                prod.mul(atoms[j + 1].c2 / atoms[j].c2);
                for l in (0..atoms.len()).filter(|&l| l != j && l != j + 1) {
                    check_degenerate(e, eta_minus_abs_p(e, l), atoms[l].p)?;
                    prod.mul(atom_ratio(e, l));
                }
            }
            None => {
                prod.mul(-1.0);
                for l in 0..atoms.len() {
                    check_degenerate(e, eta_minus_abs_p(e, l), atoms[l].p)?;
                    prod.mul(atom_ratio(e, l));
                }
            }
        }
        let m = prod.value();
        if !m.is_finite() {
            return Err(Error::NumericalOverflow(format!(
                "norming constant for eta = {} overflows (log m = {})",
                e.value,
                prod.ln_abs()
            )));
        }
        if !(m > 0.0) {
            return Err(Error::NoConvergence(format!(
                "norming constant for eta = {} came out nonpositive ({m})",
                e.value
            )));
        }
        entries.push(ScatteringEntry { eta: e.value, m });
    }
    ScatteringData::new(entries)
}

fn check_degenerate(e: &Eta, gap: f64, p: f64) -> Result<()> {
    if gap.abs() < 1e-10 {
        return Err(Error::NearDegenerate {
            eta: e.value,
            p: p.abs(),
        });
    }
    Ok(())
}

/// Relative residual of `∏(z − η_j²) = ∏(z − p_j²)(1 − Σ c_j²/(z − p_j²))` at `z`.
pub fn kappa_identity_residual(sigma: &AtomicMeasure, s: &ScatteringData, z: f64) -> f64 {
    let lhs: f64 = s.entries().iter().map(|e| z - e.eta * e.eta).product();
    let atoms = sigma.atoms();
    // expand the right side without dividing: ∏(z − p²) − Σ c_j² ∏_{k≠j}(z − p_k²)
    let full: f64 = atoms.iter().map(|a| z - a.p * a.p).product();
    let mut sum = 0.0;
    for (j, a) in atoms.iter().enumerate() {
        let rest: f64 = atoms
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, b)| z - b.p * b.p)
            .product();
        sum += a.c2 * rest;
    }
    let rhs = full - sum;
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    (lhs - rhs).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{normalize_h, Atom};

    fn measure(v: &[(f64, f64)]) -> AtomicMeasure {
        normalize_h(&v.iter().map(|&(p, c)| Atom::new(p, c)).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn single_atom() {
        let s = forward_map(&measure(&[(0.6, 0.64)])).unwrap();
        assert_eq!(s.len(), 1);
        assert!(close(s.entries()[0].eta, 1.0, 1e-15));
        assert!(close(s.entries()[0].m, 8.0, 1e-14));
    }

    #[test]
    fn symmetric_pair() {
        let s = forward_map(&measure(&[(1.0, 1.5), (-1.0, 1.5)])).unwrap();
        let e = s.entries();
        assert_eq!(e[0].eta, 1.0);
        assert!(close(e[0].m, 6.0, 1e-14));
        assert!(close(e[1].eta, 2.0, 1e-15));
        assert!(close(e[1].m, 12.0, 1e-14));
    }

    #[test]
    fn asymmetric_pair_uses_mass_ratio() {
        let a = forward_map(&measure(&[(1.0, 1.0), (-1.0, 2.0)])).unwrap();
        let b = forward_map(&measure(&[(1.0, 2.0), (-1.0, 1.0)])).unwrap();
        assert!(close(a.entries()[0].m, 4.0 * b.entries()[0].m, 1e-14));
        // the non-paired entry sees the pair only through its merged mass
        assert!(close(a.entries()[1].m, b.entries()[1].m, 1e-14));
    }

    #[test]
    fn brownian_atom() {
        let s = forward_map(&measure(&[(0.0, 1.0)])).unwrap();
        assert!(close(s.entries()[0].eta, 1.0, 1e-15));
        assert!(close(s.entries()[0].m, 2.0, 1e-14));
    }

    #[test]
    fn kappa_identity_on_examples() {
        for v in [
            vec![(0.6, 0.64)],
            vec![(1.0, 1.5), (-1.0, 1.5)],
            vec![(1.0, 1.0), (2.0, 1.0)],
            vec![(0.3, 0.2), (-0.7, 1.1), (1.4, 0.5), (-1.4, 0.9)],
        ] {
            let sigma = measure(&v);
            let s = forward_map(&sigma).unwrap();
            let n = sigma.len();
            for k in 0..(2 * n + 3) {
                let z = -3.0 + 0.731 * k as f64;
                assert!(kappa_identity_residual(&sigma, &s, z) < 1e-10);
            }
        }
    }

    #[test]
    fn near_degenerate_detected() {
        // a huge atom next to a tiny one pins the middle root onto |p|
        let sigma = measure(&[(1.0, 1e-24), (1.0 + 1e-3, 1.0)]);
        assert!(matches!(
            forward_map(&sigma),
            Err(Error::NearDegenerate { .. })
        ));
    }

    #[test]
    fn scaled_product_survives_extremes() {
        let mut p = ScaledProduct::new(1.0);
        for _ in 0..400 {
            p.mul(1e3);
        }
        for _ in 0..400 {
            p.div(1e3);
        }
        assert!((p.value() - 1.0).abs() < 1e-10);
        assert!((p.ln_abs()).abs() < 1e-10);
    }
}
