use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, PairRole};

/// Merged pole of the secular function: `p²` with the summed mass of every
/// atom at `±p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Pole {
    pub abs_p: f64,
    pub mass: f64,
}

impl Pole {
    pub fn sq(&self) -> f64 {
        self.abs_p * self.abs_p
    }
}

/// Root `r` of `Σ c_j²/(r − p_j²) = 1`, stored relative to its nearest pole so
/// that gaps `r − p²` keep full relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRoot {
    pub value: f64,
    pub(crate) anchor: usize,
    pub(crate) offset: f64,
}

pub(crate) fn merged_poles(sigma: &AtomicMeasure) -> Result<Vec<Pole>> {
    let atoms = sigma.atoms();
    let mut poles = Vec::with_capacity(atoms.len());
    for (j, a) in atoms.iter().enumerate() {
        match sigma.pair_role(j) {
            Some(PairRole::Positive) => poles.push(Pole {
                abs_p: a.p,
                mass: a.c2 + atoms[j + 1].c2,
            }),
            Some(PairRole::Negative) => {}
            None => poles.push(Pole {
                abs_p: a.p.abs(),
                mass: a.c2,
            }),
        }
    }
    if poles.windows(2).any(|w| !(w[0].abs_p < w[1].abs_p)) {
        return Err(Error::InvalidMeasure(
            "measure violates condition (H): |p| not strictly ordered".into(),
        ));
    }
    Ok(poles)
}

/// `r − P_l` for `r = P_anchor + offset`, without forming `r`.
pub(crate) fn gap(poles: &[Pole], anchor: usize, offset: f64, l: usize) -> f64 {
    if l == anchor {
        return offset;
    }
    let (a, b) = (poles[anchor].abs_p, poles[l].abs_p);
    (a - b) * (a + b) + offset
}

fn secular_at(poles: &[Pole], anchor: usize, offset: f64) -> f64 {
    poles
        .iter()
        .enumerate()
        .map(|(l, p)| p.mass / gap(poles, anchor, offset, l))
        .sum()
}

/// `f(r) = Σ c_j²/(r − p_j²)` with symmetric pairs merged.
pub fn secular_function(sigma: &AtomicMeasure, r: f64) -> Result<f64> {
    Ok(merged_poles(sigma)?
        .iter()
        .map(|p| p.mass / (r - p.sq()))
        .sum())
}

/// Bisection on `log(offset)` for the root of `f = 1` on the side of
/// `anchor` in the direction `sign`, with offsets up to `max_offset`.
fn bisect_offset(poles: &[Pole], anchor: usize, sign: f64, max_offset: f64) -> f64 {
    // f(anchor + sign * t) - 1 is positive at t -> 0+ when sign > 0 and
    // negative at t -> 0+ when sign < 0
    let h = |t: f64| secular_at(poles, anchor, sign * t) - 1.0;
    let mut lo = (max_offset * 1e-300).ln();
    let mut hi = max_offset.ln();
    let positive_near_pole = sign > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h(mid.exp());
        if v == 0.0 {
            return mid.exp();
        }
        if (v > 0.0) == positive_near_pole {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (lo.exp(), hi.exp());
    if h(a).abs() < h(b).abs() {
        a
    } else {
        b
    }
}

pub(crate) fn roots_of_poles(poles: &[Pole]) -> Vec<SecularRoot> {
    let total: f64 = poles.iter().map(|p| p.mass).sum();
    let k = poles.len();
    let mut roots = Vec::with_capacity(k);
    for i in 0..k {
        let (anchor, offset) = if i + 1 < k {
            let width = poles[i + 1].sq() - poles[i].sq();
            // f decreases from +∞ to −∞ across the interval; pick the nearer pole
            let mid = secular_at(poles, i, 0.5 * width);
            if mid >= 1.0 {
                let t = bisect_offset(poles, i + 1, -1.0, 0.5 * width);
                (i + 1, -t)
            } else {
                let t = bisect_offset(poles, i, 1.0, 0.5 * width);
                (i, t)
            }
        } else {
            // f(P_max + S) <= 1, so the last root lies in (P_max, P_max + S]
            let t = bisect_offset(poles, i, 1.0, total);
            (i, t)
        };
        roots.push(SecularRoot {
            value: poles[anchor].sq() + offset,
            anchor,
            offset,
        });
    }
    roots
}

/// The `n − m` roots `0 < r_1 < … < r_{n−m}` of the secular equation.
pub fn characteristic_roots(sigma: &AtomicMeasure) -> Result<Vec<SecularRoot>> {
    if sigma.is_empty() {
        return Err(Error::InvalidMeasure("empty measure".into()));
    }
    let poles = merged_poles(sigma)?;
    Ok(roots_of_poles(&poles))
}
