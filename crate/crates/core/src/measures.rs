//! Finite spectral measures: atomic measures in canonical order and
//! compactly supported measures with a piecewise-constant density part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre};

/// Relative tolerance under which two rates of opposite sign are merged into
/// an exact `+p, -p` pair.
pub const PAIRING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub p: f64,
    pub c2: f64,
}

impl Atom {
    pub fn new(p: f64, c2: f64) -> Self {
        Self { p, c2 }
    }
}

/// Atomic measure `Σ c_j² δ_{p_j}` ordered by nondecreasing `|p|`, with the
/// positive member first in every exact `±p` pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    pairing: Vec<usize>,
}

impl AtomicMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Indices `j` with `atoms[j].p > 0` and `atoms[j + 1].p == -atoms[j].p`.
    pub fn pairing(&self) -> &[usize] {
        &self.pairing
    }

    pub fn m_pairs(&self) -> usize {
        self.pairing.len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `M(σ) = max |p_j|` (zero for the empty measure).
    pub fn max_rate(&self) -> f64 {
        self.atoms.last().map_or(0.0, |a| a.p.abs())
    }

    /// `S(σ) = Σ c_j²`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.c2).sum()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.p).collect()
    }

    /// Whether atom `j` is the positive or negative member of a pair.
    pub fn pair_role(&self, j: usize) -> Option<PairRole> {
        if self.pairing.binary_search(&j).is_ok() {
            Some(PairRole::Positive)
        } else if j > 0 && self.pairing.binary_search(&(j - 1)).is_ok() {
            Some(PairRole::Negative)
        } else {
            None
        }
    }

    pub fn reflect(&self) -> AtomicMeasure {
        let flipped: Vec<Atom> = self.atoms.iter().map(|a| Atom::new(-a.p, a.c2)).collect();
        normalize_h(&flipped).expect("reflection of a valid measure is valid")
    }

    pub fn covariance(&self, x: f64, y: f64) -> Result<f64> {
        check_times(x, y)?;
        Ok(self
            .atoms
            .iter()
            .map(|a| a.c2 * covariance_kernel(a.p, x, y))
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRole {
    Positive,
    Negative,
}

/// Bring an unordered list of atoms into condition (H).
///
/// Rates closer than the pairing tolerance are either symmetrized into an
/// exact `±p` pair (opposite signs) or rejected as duplicates.
pub fn normalize_h(atoms: &[Atom]) -> Result<AtomicMeasure> {
    for a in atoms {
        if !a.p.is_finite() {
            return Err(Error::InvalidMeasure(format!("non-finite rate {}", a.p)));
        }
        if !(a.c2 > 0.0) || !a.c2.is_finite() {
            return Err(Error::NonpositiveMass { p: a.p, c2: a.c2 });
        }
    }
    let mut sorted = atoms.to_vec();
    // ties in |p| put the positive member first; exact order of the rest is
    // fixed by |p| being distinct after validation
    sorted.sort_by(|a, b| {
        a.p.abs()
            .total_cmp(&b.p.abs())
            .then(b.p.total_cmp(&a.p))
            .then(a.c2.total_cmp(&b.c2))
    });

    let close = |a: f64, b: f64| (a.abs() - b.abs()).abs() <= PAIRING_TOL * a.abs().max(1.0);
    let mut out = Vec::with_capacity(sorted.len());
    let mut pairing = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let a = sorted[i];
        if i + 1 < sorted.len() && close(a.p, sorted[i + 1].p) {
            let b = sorted[i + 1];
            let opposite = (a.p > 0.0 && b.p < 0.0) || (a.p < 0.0 && b.p > 0.0);
            if !opposite {
                return Err(Error::DuplicateRate(a.p, b.p));
            }
            if i + 2 < sorted.len() && close(b.p, sorted[i + 2].p) {
                return Err(Error::DuplicateRate(b.p, sorted[i + 2].p));
            }
            let r = 0.5 * (a.p.abs() + b.p.abs());
            let (pos, neg) = if a.p > 0.0 { (a, b) } else { (b, a) };
            pairing.push(out.len());
            out.push(Atom::new(r, pos.c2));
            out.push(Atom::new(-r, neg.c2));
            i += 2;
        } else {
            out.push(a);
            i += 1;
        }
    }
    Ok(AtomicMeasure {
        atoms: out,
        pairing,
    })
}

/// `(e^{ζ(x+y)} − e^{ζ|x−y|}) / (2ζ)`, with its `ζ → 0` limit handled by a
/// short series.
pub fn covariance_kernel(zeta: f64, x: f64, y: f64) -> f64 {
    let s = x + y;
    let d = (x - y).abs();
    if zeta.abs() * s < 1e-6 {
        let (s2, d2) = (s * s, d * d);
        let (s3, d3) = (s2 * s, d2 * d);
        let (s4, d4) = (s3 * s, d3 * d);
        return 0.5 * (s - d)
            + zeta * (s2 - d2) / 4.0
            + zeta * zeta * (s3 - d3) / 12.0
            + zeta * zeta * zeta * (s4 - d4) / 48.0;
    }
    (zeta * d).exp() * (zeta * (s - d)).exp_m1() / (2.0 * zeta)
}

fn check_times(x: f64, y: f64) -> Result<()> {
    if x < 0.0 {
        return Err(Error::NegativeTime(x));
    }
    if y < 0.0 {
        return Err(Error::NegativeTime(y));
    }
    Ok(())
}

/// Piecewise-constant nonnegative density `f` on `[breaks[0], breaks[M])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityJson")]
pub struct Density {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct DensityJson {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<DensityJson> for Density {
    type Error = Error;
    fn try_from(raw: DensityJson) -> Result<Self> {
        Density::new(raw.breaks, raw.values)
    }
}

impl Density {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return Err(Error::InvalidMeasure(format!(
                "density needs M >= 1 values and M + 1 breaks, got {} and {}",
                values.len(),
                breaks.len()
            )));
        }
        if breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::UnsupportedMeasure(
                "density support must be compact".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMeasure(
                "density breaks must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure(
                "density values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { breaks, values })
    }

    /// Constant density `value` on `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, value: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![value])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower(&self) -> f64 {
        self.breaks[0]
    }

    pub fn upper(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn radius(&self) -> f64 {
        self.lower().abs().max(self.upper().abs())
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.lower() || x >= self.upper() {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b <= x) - 1;
        self.values[i]
    }

    pub fn mass(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * (b - a)).sum()
    }

    /// Exact mass of `[a, b)`.
    pub fn mass_on(&self, a: f64, b: f64) -> f64 {
        self.pieces()
            .map(|(l, r, v)| {
                let lo = l.max(a);
                let hi = r.min(b);
                if hi > lo {
                    v * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn mirror(&self) -> Density {
        let breaks = self.breaks.iter().rev().map(|b| -b).collect();
        let values = self.values.iter().rev().copied().collect();
        Density { breaks, values }
    }

    fn covariance(&self, x: f64, y: f64) -> f64 {
        let scale = (x + y).max(1.0) * self.mass().max(1e-300);
        self.pieces()
            .filter(|&(_, _, v)| v > 0.0)
            .map(|(a, b, v)| {
                v * quadrature::adaptive(&|z| covariance_kernel(z, x, y), a, b, 1e-15 * scale)
            })
            .sum()
    }

    fn sum(&self, other: &Density) -> Density {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.value_at(mid) + other.value_at(mid)
            })
            .collect();
        Density { breaks, values }
    }
}

/// Compactly supported finite measure: atoms plus an optional
/// piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct FiniteMeasure {
    atomic: AtomicMeasure,
    density: Option<Density>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<Density>,
}

impl TryFrom<MeasureJson> for FiniteMeasure {
    type Error = Error;
    fn try_from(raw: MeasureJson) -> Result<Self> {
        Ok(FiniteMeasure::new(normalize_h(&raw.atoms)?, raw.density))
    }
}

impl From<FiniteMeasure> for MeasureJson {
    fn from(m: FiniteMeasure) -> Self {
        MeasureJson {
            atoms: m.atomic.atoms,
            density: m.density,
        }
    }
}

impl From<AtomicMeasure> for FiniteMeasure {
    fn from(atomic: AtomicMeasure) -> Self {
        FiniteMeasure::new(atomic, None)
    }
}

impl FiniteMeasure {
    pub fn new(atomic: AtomicMeasure, density: Option<Density>) -> Self {
        Self { atomic, density }
    }

    pub fn from_atoms(atoms: &[Atom]) -> Result<Self> {
        Ok(normalize_h(atoms)?.into())
    }

    pub fn atomic(&self) -> &AtomicMeasure {
        &self.atomic
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn is_atomic(&self) -> bool {
        self.density.is_none()
    }

    /// The atomic part, or `UnsupportedMeasure` if a density is present.
    pub fn as_atomic(&self) -> Result<&AtomicMeasure> {
        match self.density {
            None => Ok(&self.atomic),
            Some(_) => Err(Error::UnsupportedMeasure(
                "operation requires a purely atomic measure".into(),
            )),
        }
    }

    /// `β = max(|ξ_0|, |ξ_M|, M(atomic))`.
    pub fn support_radius(&self) -> f64 {
        let d = self.density.as_ref().map_or(0.0, Density::radius);
        d.max(self.atomic.max_rate())
    }

    pub fn total_mass(&self) -> f64 {
        self.atomic.total_mass() + self.density.as_ref().map_or(0.0, Density::mass)
    }

    /// `σ̃(A) = σ(−A)`.
    pub fn reflect(&self) -> FiniteMeasure {
        FiniteMeasure {
            atomic: self.atomic.reflect(),
            density: self.density.as_ref().map(Density::mirror),
        }
    }

    /// `R_σ(x, y)`: atoms summed exactly, density pieces by adaptive quadrature.
    pub fn covariance(&self, x: f64, y: f64) -> Result<f64> {
        let atomic = self.atomic.covariance(x, y)?;
        Ok(atomic + self.density.as_ref().map_or(0.0, |d| d.covariance(x, y)))
    }

    pub fn sum(&self, other: &FiniteMeasure) -> Result<FiniteMeasure> {
        let mut atoms: Vec<Atom> = self.atomic.atoms.clone();
        for b in &other.atomic.atoms {
            match atoms.iter_mut().find(|a| a.p == b.p) {
                Some(a) => a.c2 += b.c2,
                None => atoms.push(*b),
            }
        }
        let density = match (&self.density, &other.density) {
            (Some(a), Some(b)) => Some(a.sum(b)),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        Ok(FiniteMeasure::new(normalize_h(&atoms)?, density))
    }

    /// Grid discretization `σ_n = Σ_{j=-n}^{n} σ([jβ/n, (j+1)β/n)) δ_{jβ/n}`.
    pub fn discretize(&self, n: usize) -> Result<AtomicMeasure> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "discretization level must be >= 1".into(),
            ));
        }
        let beta = self.support_radius();
        if beta == 0.0 {
            return normalize_h(self.atomic.atoms());
        }
        let nf = n as f64;
        let ni = n as i64;
        let mut mass = vec![0.0; 2 * n + 1];
        for a in self.atomic.atoms() {
            let t = a.p * nf / beta;
            let r = t.round();
            let j = if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
                r
            } else {
                t.floor()
            } as i64;
            mass[(j.clamp(-ni, ni) + ni) as usize] += a.c2;
        }
        if let Some(d) = &self.density {
            for j in -ni..=ni {
                let lo = j as f64 * beta / nf;
                let hi = (j + 1) as f64 * beta / nf;
                mass[(j + ni) as usize] += d.mass_on(lo, hi);
            }
        }
        let atoms: Vec<Atom> = (-ni..=ni)
            .zip(mass)
            .filter(|&(_, m)| m > 0.0)
            .map(|(j, m)| Atom::new(j as f64 * beta / nf, m))
            .collect();
        normalize_h(&atoms)
    }

    /// Mollification by the standard bump at scale `1/n`, returned as a
    /// piecewise-constant density whose cell values are exact cell averages.
    pub fn mollify(&self, n: usize) -> Result<FiniteMeasure> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "mollification level must be >= 1".into(),
            ));
        }
        let nf = n as f64;
        let beta = self.support_radius();
        let lo = -beta - 1.0 / nf;
        let hi = beta + 1.0 / nf;
        let cells = (((hi - lo) * 8.0 * nf).ceil() as usize).clamp(64, 20_000);
        let width = (hi - lo) / cells as f64;
        let breaks: Vec<f64> = (0..=cells)
            .map(|i| {
                if i == cells {
                    hi
                } else {
                    lo + i as f64 * width
                }
            })
            .collect();
        let bump = Bump::get();

        // mass of the mollified measure on [a, b)
        let cell_mass = |a: f64, b: f64| -> f64 {
            let mut m = 0.0;
            for atom in self.atomic.atoms() {
                m += atom.c2 * (bump.cdf(nf * (b - atom.p)) - bump.cdf(nf * (a - atom.p)));
            }
            if let Some(d) = &self.density {
                for (l, r, v) in d.pieces() {
                    if v == 0.0 || r <= a - 1.0 / nf || l >= b + 1.0 / nf {
                        continue;
                    }
                    // ∫_l^r cdf(n(e − η)) dη = (C(n(e − l)) − C(n(e − r))) / n
                    let upper = bump.cdf_integral(nf * (b - l)) - bump.cdf_integral(nf * (b - r));
                    let lower = bump.cdf_integral(nf * (a - l)) - bump.cdf_integral(nf * (a - r));
                    m += v * (upper - lower) / nf;
                }
            }
            m.max(0.0)
        };
        let values = breaks
            .windows(2)
            .map(|w| cell_mass(w[0], w[1]) / (w[1] - w[0]))
            .collect();
        Ok(FiniteMeasure::new(
            AtomicMeasure::empty(),
            Some(Density::new(breaks, values)?),
        ))
    }
}

/// Standard bump `exp(−1/(1−t²))` on (−1, 1), normalized to unit mass.
#[derive(Debug)]
pub struct Bump {
    norm: f64,
    rule: GaussLegendre,
}

impl Bump {
    pub fn get() -> &'static Bump {
        static BUMP: std::sync::OnceLock<Bump> = std::sync::OnceLock::new();
        BUMP.get_or_init(|| {
            let mut bump = Bump {
                norm: 1.0,
                rule: GaussLegendre::new(33),
            };
            bump.norm = bump.panels(Self::raw, 1.0);
            bump
        })
    }

    fn raw(t: f64) -> f64 {
        if t.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t * t)).exp()
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        Self::raw(t) / self.norm
    }

    fn panels<F: Fn(f64) -> f64>(&self, f: F, t: f64) -> f64 {
        // eight 33-point panels on [−1, t]
        let h = (t + 1.0) / 8.0;
        (0..8)
            .map(|k| {
                let a = -1.0 + k as f64 * h;
                self.rule.integrate(&f, a, a + h)
            })
            .sum()
    }

    /// `∫_{−1}^{t} φ`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            self.panels(|s| self.density(s), t).clamp(0.0, 1.0)
        }
    }

    /// `∫_{−1}^{t} cdf(s) ds = t·cdf(t) − ∫_{−1}^{t} s φ(s) ds`.
    pub fn cdf_integral(&self, t: f64) -> f64 {
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            t
        } else {
            t * self.cdf(t) - self.panels(|s| s * self.density(s), t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(v: &[(f64, f64)]) -> Vec<Atom> {
        v.iter().map(|&(p, c2)| Atom::new(p, c2)).collect()
    }

    #[test]
    fn normalize_orders_and_pairs() {
        let m = normalize_h(&atoms(&[(-1.0, 1.0), (1.0, 2.0), (0.5, 1.0)])).unwrap();
        assert_eq!(
            m.atoms(),
            &atoms(&[(0.5, 1.0), (1.0, 2.0), (-1.0, 1.0)])[..]
        );
        assert_eq!(m.m_pairs(), 1);
        assert_eq!(m.pairing(), &[1]);
        assert_eq!(m.pair_role(2), Some(PairRole::Negative));
        assert_eq!(m.pair_role(0), None);
    }

    #[test]
    fn normalize_single_atom() {
        let m = normalize_h(&atoms(&[(0.6, 0.64)])).unwrap();
        assert_eq!(m.atoms(), &atoms(&[(0.6, 0.64)])[..]);
        assert_eq!(m.m_pairs(), 0);
    }

    #[test]
    fn normalize_rejects_duplicates_and_bad_mass() {
        assert!(matches!(
            normalize_h(&atoms(&[(1.0, 1.0), (1.0, 2.0)])),
            Err(Error::DuplicateRate(..))
        ));
        assert!(matches!(
            normalize_h(&atoms(&[(1.0, 0.0)])),
            Err(Error::NonpositiveMass { .. })
        ));
        assert!(matches!(
            normalize_h(&atoms(&[(1.0, 1.0), (-1.0, 1.0), (1.0 + 1e-14, 1.0)])),
            Err(Error::DuplicateRate(..))
        ));
    }

    #[test]
    fn near_pairs_are_symmetrized() {
        let m = normalize_h(&atoms(&[(-1.0 - 1e-13, 1.0), (1.0, 2.0)])).unwrap();
        assert_eq!(m.atoms()[0].p, -m.atoms()[1].p);
        assert_eq!(m.m_pairs(), 1);
    }

    #[test]
    fn reflect_examples() {
        let m = FiniteMeasure::from_atoms(&atoms(&[(0.6, 0.64)])).unwrap();
        assert_eq!(m.reflect().atomic().atoms(), &atoms(&[(-0.6, 0.64)])[..]);
        let pair = FiniteMeasure::from_atoms(&atoms(&[(1.0, 3.0), (-1.0, 5.0)])).unwrap();
        assert_eq!(
            pair.reflect().atomic().atoms(),
            &atoms(&[(1.0, 5.0), (-1.0, 3.0)])[..]
        );
        let mixed = FiniteMeasure::new(
            normalize_h(&atoms(&[(0.3, 1.0), (-2.0, 0.5)])).unwrap(),
            Some(Density::new(vec![-1.0, 0.0, 0.5], vec![0.2, 0.7]).unwrap()),
        );
        assert_eq!(mixed.reflect().reflect(), mixed);
        assert_eq!(mixed.reflect().total_mass(), mixed.total_mass());
        assert_eq!(mixed.reflect().support_radius(), mixed.support_radius());
    }

    #[test]
    fn covariance_examples() {
        let bm = FiniteMeasure::from_atoms(&atoms(&[(0.0, 1.0)])).unwrap();
        assert!((bm.covariance(1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let one = FiniteMeasure::from_atoms(&atoms(&[(1.0, 1.0)])).unwrap();
        let expected = ((2.0f64).exp() - 1.0) / 2.0;
        assert!((one.covariance(1.0, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 3.194528).abs() < 1e-6);
        assert_eq!(one.covariance(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            one.covariance(-1.0, 0.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn kernel_series_branch_is_continuous() {
        for &(x, y) in &[(0.3, 0.7), (1.0, 1.0), (2.0, 0.5)] {
            let z = 1e-7 / (x + y);
            let series = covariance_kernel(z * 0.999, x, y);
            let zz = z * 0.999;
            let d = (x - y).abs();
            let direct = (zz * d).exp() * (zz * (x + y - d)).exp_m1() / (2.0 * zz);
            assert!((series - direct).abs() < 1e-14);
            let above = covariance_kernel(z * 1.001, x, y);
            assert!((series - above).abs() < 1e-9);
        }
    }

    #[test]
    fn density_covariance_matches_closed_form() {
        // uniform density 1 on [0, 1]: ∫_0^1 (e^{2ζ} − 1)/(2ζ) dζ at x = y = 1
        let d = FiniteMeasure::new(
            AtomicMeasure::empty(),
            Some(Density::uniform(0.0, 1.0, 1.0).unwrap()),
        );
        let reference = crate::quadrature::GaussLegendre::new(40).integrate(
            |z| covariance_kernel(z, 1.0, 1.0),
            0.0,
            1.0,
        );
        assert!((d.covariance(1.0, 1.0).unwrap() - reference).abs() < 1e-13);
    }

    #[test]
    fn discretize_uniform_density() {
        let d = FiniteMeasure::new(
            AtomicMeasure::empty(),
            Some(Density::uniform(0.0, 1.0, 1.0).unwrap()),
        );
        let m = d.discretize(2).unwrap();
        assert_eq!(m.atoms(), &atoms(&[(0.0, 0.5), (0.5, 0.5)])[..]);
    }

    #[test]
    fn discretize_grid_atoms_are_fixed() {
        let m = FiniteMeasure::from_atoms(&atoms(&[(0.5, 1.0), (-1.0, 0.25), (1.0, 2.0)])).unwrap();
        let d = m.discretize(4).unwrap();
        assert_eq!(d.len(), 3);
        for (a, b) in d.atoms().iter().zip(m.atomic().atoms()) {
            assert!((a.p - b.p).abs() < 1e-15 && a.c2 == b.c2);
        }
    }

    #[test]
    fn discretize_mass_and_support() {
        let d = FiniteMeasure::new(
            AtomicMeasure::empty(),
            Some(Density::new(vec![-0.7, 0.1, 0.9], vec![1.0, 0.5]).unwrap()),
        );
        for n in [1, 3, 10, 50] {
            let m = d.discretize(n).unwrap();
            assert!(m.total_mass() <= d.total_mass() + 1e-15);
            assert!((m.total_mass() - d.total_mass()).abs() <= 1.0 / n as f64);
            assert!(m.max_rate() <= d.support_radius() + 1e-15);
        }
    }

    #[test]
    fn bump_normalization() {
        let b = Bump::get();
        assert!((b.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((b.cdf(0.999999) - 1.0).abs() < 1e-10);
        assert!((b.cdf_integral(0.999999) - 0.999999).abs() < 1e-9);
        let gl = GaussLegendre::new(200);
        let reference = gl.integrate(Bump::raw, -1.0, 1.0);
        assert!((reference / b.norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mollify_preserves_mass() {
        let dirac = FiniteMeasure::from_atoms(&atoms(&[(0.0, 1.0)])).unwrap();
        let m = dirac.mollify(64).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-8);
        let d = m.density().unwrap();
        assert!(d.mass_on(-1.0 / 64.0, 1.0 / 64.0) > 1.0 - 1e-8);

        let single = FiniteMeasure::from_atoms(&atoms(&[(0.6, 0.64)])).unwrap();
        assert!((single.mollify(5).unwrap().total_mass() - 0.64).abs() < 1e-8);

        let dens = FiniteMeasure::new(
            normalize_h(&atoms(&[(0.2, 0.3)])).unwrap(),
            Some(Density::uniform(-1.0, 1.0, 0.5).unwrap()),
        );
        for n in [1, 4, 16] {
            let m = dens.mollify(n).unwrap();
            assert!((m.total_mass() - 1.3).abs() < 1e-8);
            let r = m.support_radius();
            assert!(r <= 1.0 + 1.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn mollify_converges_vaguely() {
        let sigma = FiniteMeasure::from_atoms(&atoms(&[(0.6, 0.64), (-0.3, 0.5)])).unwrap();
        let target = sigma.covariance(1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [2, 4, 8, 16, 32] {
            let diff = (sigma.mollify(n).unwrap().covariance(1.0, 1.0).unwrap() - target).abs();
            assert!(diff < prev, "n={n} diff={diff} prev={prev}");
            prev = diff;
        }
    }

    #[test]
    fn json_schema_round_trip() {
        let txt = r#"{"atoms":[{"p":0.6,"c2":0.64}],"density":{"breaks":[-1.0,0.0,1.0],"values":[0.5,0.5]}}"#;
        let m: FiniteMeasure = serde_json::from_str(txt).unwrap();
        assert_eq!(m.atomic().len(), 1);
        assert_eq!(serde_json::to_string(&m).unwrap(), txt);
        let only: FiniteMeasure = serde_json::from_str(r#"{"atoms":[{"p":1,"c2":2}]}"#).unwrap();
        assert!(only.is_atomic());
        assert!(serde_json::from_str::<FiniteMeasure>(r#"{"atoms":[{"p":1,"c2":-2}]}"#).is_err());
    }

    #[test]
    fn sum_merges_atoms_and_densities() {
        let a = FiniteMeasure::new(
            normalize_h(&atoms(&[(0.5, 1.0)])).unwrap(),
            Some(Density::uniform(0.0, 1.0, 1.0).unwrap()),
        );
        let b = FiniteMeasure::new(
            normalize_h(&atoms(&[(0.5, 2.0), (-0.5, 1.0)])).unwrap(),
            Some(Density::uniform(0.5, 2.0, 0.5).unwrap()),
        );
        let s = a.sum(&b).unwrap();
        assert!((s.total_mass() - (a.total_mass() + b.total_mass())).abs() < 1e-14);
        assert_eq!(s.atomic().m_pairs(), 1);
    }
}
