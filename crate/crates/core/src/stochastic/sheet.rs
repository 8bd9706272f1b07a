//! Compound Ornstein–Uhlenbeck processes as Wiener integrals against a
//! Brownian sheet `W(dq, dz)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{normalize_h, Atom, AtomicMeasure, Density, FiniteMeasure};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateWeight {
    pub p: f64,
    pub d: f64,
}

/// Piecewise-constant nonnegative profile `g` on the `q` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    fn validate(&self) -> Result<()> {
        if self.breaks.len() != self.values.len() + 1 || self.values.is_empty() {
            return Err(Error::InvalidInput(
                "profile needs one more break than values".into(),
            ));
        }
        if self.breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("profile breaks must increase".into()));
        }
        if self.breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::UnsupportedMeasure(
                "profile support is not compact".into(),
            ));
        }
        if self.breaks[0] < 0.0 {
            return Err(Error::InvalidInput("profile must live on q >= 0".into()));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(
                "profile values must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.breaks[0]
    }

    /// `T₀`: `g = 0` beyond this point.
    pub fn upper(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn value_at(&self, q: f64) -> f64 {
        if q < self.lower() || q >= self.upper() {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b <= q) - 1;
        self.values[i]
    }

    /// `∫_lo^hi g²`.
    pub fn sq_mass_on(&self, lo: f64, hi: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let a = self.breaks[i].max(lo);
                let b = self.breaks[i + 1].min(hi);
                if b > a {
                    v * v * (b - a)
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn sq_mass(&self) -> f64 {
        self.sq_mass_on(self.lower(), self.upper())
    }
}

/// Kernel specification of a compound OU process on the sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompoundOUSpec {
    /// `h = Σ e^{(y−z)p_j} d_j / √(q_j − q_{j−1})` on the strips of the layout.
    Atomic {
        a: f64,
        b: f64,
        alpha: Vec<RateWeight>,
    },
    /// `h = e^{(y−z)(q−a)} g(q)`, approximated on `q_grid` cells over `supp g`.
    Density { a: f64, g: Profile, q_grid: usize },
}

/// Piece of a kernel that is constant in `q` on `[lo, hi)`:
/// `coef · e^{(y−z) rate}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPiece {
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
    pub coef: f64,
    pub companion: f64,
}

impl CompoundOUSpec {
    pub fn atomic(a: f64, b: f64, alpha: Vec<RateWeight>) -> Result<Self> {
        let spec = CompoundOUSpec::Atomic { a, b, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn density(a: f64, g: Profile, q_grid: usize) -> Result<Self> {
        let spec = CompoundOUSpec::Density { a, g, q_grid };
        spec.validate()?;
        Ok(spec)
    }

    /// `α(σ) = {(p_j, c_j)}` for `σ` in (H) order, with `a ≥ 0` and `−a ≤ b < p₁`.
    pub fn from_measure(sigma: &AtomicMeasure, a: f64, b: f64) -> Result<Self> {
        let alpha = sigma
            .atoms()
            .iter()
            .map(|at| RateWeight {
                p: at.p,
                d: at.c2.sqrt(),
            })
            .collect();
        Self::atomic(a, b, alpha)
    }

    /// Layout with `q₀ = start`: `b = min(p₁ − 1, start)`, `a = start − b`.
    pub fn from_measure_at(sigma: &AtomicMeasure, start: f64) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidMeasure("empty measure".into()));
        }
        let p1 = sigma.atoms()[0].p;
        let b = (p1 - 1.0).min(start);
        Self::from_measure(sigma, start - b, b)
    }

    /// `g(q) = √f(q − a)` with `a` the support radius of `f`.
    pub fn from_density(f: &Density, q_grid: usize) -> Result<Self> {
        let a = f.radius();
        let g = Profile {
            breaks: f.breaks().iter().map(|x| x + a).collect(),
            values: f.values().iter().map(|v| v.sqrt()).collect(),
        };
        Self::density(a, g, q_grid)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompoundOUSpec::Atomic { a, b, alpha } => {
                if alpha.is_empty() {
                    return Err(Error::InvalidInput("atomic spec has no rates".into()));
                }
                if !(*a >= 0.0) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "need finite a >= 0, got a = {a}"
                    )));
                }
                if !(-a <= *b && *b < alpha[0].p) {
                    return Err(Error::InvalidInput(format!(
                        "need -a <= b < p_1, got a = {a}, b = {b}, p_1 = {}",
                        alpha[0].p
                    )));
                }
                let q = self.strip_bounds();
                if q.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidInput("strip boundaries must increase".into()));
                }
                if alpha
                    .iter()
                    .any(|rw| !rw.p.is_finite() || !rw.d.is_finite())
                {
                    return Err(Error::InvalidInput("non-finite rate or weight".into()));
                }
                Ok(())
            }
            CompoundOUSpec::Density { a, g, q_grid } => {
                if !(*a >= 0.0) || !a.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "need finite a >= 0, got a = {a}"
                    )));
                }
                if *q_grid == 0 {
                    return Err(Error::InvalidInput("q_grid must be positive".into()));
                }
                g.validate()
            }
        }
    }

    /// `q₀ < q₁ < … < q_n` for atomic specs; the cell grid for density specs.
    pub fn strip_bounds(&self) -> Vec<f64> {
        match self {
            CompoundOUSpec::Atomic { a, b, alpha } => {
                let mut q = vec![b + a];
                let mut prev = *b;
                for rw in alpha {
                    let next = q.last().unwrap() + (rw.p - prev).abs();
                    q.push(next);
                    prev = rw.p;
                }
                q
            }
            CompoundOUSpec::Density { g, q_grid, .. } => {
                let (lo, hi) = (g.lower(), g.upper());
                (0..=*q_grid)
                    .map(|i| {
                        if i == *q_grid {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / *q_grid as f64
                        }
                    })
                    .collect()
            }
        }
    }

    /// Right edge of the `q` support.
    pub fn q_extent(&self) -> f64 {
        *self.strip_bounds().last().unwrap()
    }

    pub fn pieces(&self) -> Vec<KernelPiece> {
        let q = self.strip_bounds();
        match self {
            CompoundOUSpec::Atomic { alpha, .. } => alpha
                .iter()
                .enumerate()
                .map(|(j, rw)| {
                    let coef = rw.d / (q[j + 1] - q[j]).sqrt();
                    KernelPiece {
                        lo: q[j],
                        hi: q[j + 1],
                        rate: rw.p,
                        coef,
                        companion: rw.p * coef,
                    }
                })
                .collect(),
            CompoundOUSpec::Density { a, g, .. } => q
                .windows(2)
                .filter_map(|w| {
                    let mass = g.sq_mass_on(w[0], w[1]);
                    if mass <= 0.0 {
                        return None;
                    }
                    let rate = 0.5 * (w[0] + w[1]) - a;
                    let coef = (mass / (w[1] - w[0])).sqrt();
                    Some(KernelPiece {
                        lo: w[0],
                        hi: w[1],
                        rate,
                        coef,
                        companion: rate * coef,
                    })
                })
                .collect(),
        }
    }

    /// `S = ‖h‖²` rate at the origin, i.e. the mass of the represented measure.
    pub fn mass(&self) -> f64 {
        self.pieces()
            .iter()
            .map(|p| p.coef * p.coef * (p.hi - p.lo))
            .sum()
    }

    /// Exact `Cov(X(x), X(y))` of this (approximant) kernel.
    pub fn covariance(&self, x: f64, y: f64) -> f64 {
        self.pieces()
            .iter()
            .map(|p| p.coef * p.coef * (p.hi - p.lo) * pair_kernel(p.rate, p.rate, x, y))
            .sum()
    }

    /// Exact `‖h_{a,g}(·;y) − h̃(·;y)‖²` for density specs; zero for atomic ones.
    pub fn kernel_error(&self, y: f64) -> f64 {
        let CompoundOUSpec::Density { a, g, .. } = self else {
            return 0.0;
        };
        let gl = GaussLegendre::new(16);
        let e = |k: f64| exp_integral(k, y);
        let mut total = 0.0;
        for piece in self.pieces() {
            // split the cell at the profile breaks so g is constant on each part
            let mut cuts = vec![piece.lo];
            cuts.extend(
                g.breaks
                    .iter()
                    .copied()
                    .filter(|&b| b > piece.lo && b < piece.hi),
            );
            cuts.push(piece.hi);
            for w in cuts.windows(2) {
                let gv = g.value_at(0.5 * (w[0] + w[1]));
                let (r, c) = (piece.rate, piece.coef);
                total += gl.integrate(
                    |q| {
                        let alpha = q - a;
                        gv * gv * e(2.0 * alpha) - 2.0 * gv * c * e(alpha + r) + c * c * e(2.0 * r)
                    },
                    w[0],
                    w[1],
                );
            }
        }
        // cells with zero mass but g > 0 cannot occur; rounding can make this slightly negative
        total.max(0.0)
    }

    /// Kernel modulus bound `K` with `E|X(t) − X(s)|² ≤ K |t − s|` on `[0, T]`.
    pub fn kernel_modulus(&self, t: f64) -> KernelModulus {
        let k = match self {
            CompoundOUSpec::Atomic { alpha, .. } => {
                let m = alpha.iter().map(|rw| rw.p.abs()).fold(0.0, f64::max);
                let s: f64 = alpha.iter().map(|rw| rw.d * rw.d).sum();
                (2.0 * t * m).exp() * (1.0 + t * t * m * m) * s
            }
            CompoundOUSpec::Density { a, g, .. } => {
                let t0 = g.upper() + a;
                (1.0 + t0 * t0 * t * t) * (2.0 * t * t0).exp() * g.sq_mass()
            }
        };
        KernelModulus { k, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelModulus {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

pub fn kernel_modulus(spec: &CompoundOUSpec, t: f64) -> KernelModulus {
    spec.kernel_modulus(t)
}

/// `∫_0^y e^{k s} ds`.
fn exp_integral(k: f64, y: f64) -> f64 {
    if (k * y).abs() < 1e-8 {
        y * (1.0 + 0.5 * k * y)
    } else {
        (k * y).exp_m1() / k
    }
}

/// `∫_0^{min(x,y)} e^{r(x−z)} e^{s(y−z)} dz`.
pub fn pair_kernel(r: f64, s: f64, x: f64, y: f64) -> f64 {
    let m = x.min(y);
    (r * (x - m) + s * (y - m)).exp() * exp_integral(r + s, m)
}

/// Several kernels on one sheet. Components whose strips overlap share noise
/// on the overlap, exactly as Wiener integrals against one `W` do.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetLayout {
    pub components: Vec<CompoundOUSpec>,
}

impl SheetLayout {
    pub fn new(components: Vec<CompoundOUSpec>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("sheet layout has no components".into()));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    /// True when no two components have overlapping `q` supports.
    pub fn is_disjoint(&self) -> bool {
        let mut spans: Vec<(f64, f64)> = self
            .components
            .iter()
            .map(|c| {
                let q = c.strip_bounds();
                (q[0], *q.last().unwrap())
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans.windows(2).all(|w| w[0].1 <= w[1].0)
    }

    /// `X_{a,g} + X_{A,B,μ}` (density plus atoms), or a single component.
    pub fn for_measure(sigma: &FiniteMeasure, q_grid: usize) -> Result<Self> {
        let mut components = Vec::new();
        let mut start = 0.0;
        if let Some(f) = sigma.density() {
            let spec = CompoundOUSpec::from_density(f, q_grid)?;
            start = spec.q_extent() + 1.0;
            components.push(spec);
        }
        if !sigma.atomic().is_empty() {
            let spec = if components.is_empty() {
                let p1 = sigma.atomic().atoms()[0].p;
                let b = p1 - 1.0;
                CompoundOUSpec::from_measure(sigma.atomic(), (-b).max(0.0), b)?
            } else {
                CompoundOUSpec::from_measure_at(sigma.atomic(), start)?
            };
            components.push(spec);
        }
        Self::new(components)
    }

    /// `X_{a,b,σ} + X_{A,B,μ}` with `A + B = q_n(σ) + 1`.
    pub fn sum(sigma: &AtomicMeasure, mu: &AtomicMeasure) -> Result<Self> {
        let first = Self::for_measure(&FiniteMeasure::from(sigma.clone()), 1)?
            .components
            .remove(0);
        let second = CompoundOUSpec::from_measure_at(mu, first.q_extent() + 1.0)?;
        Self::new(vec![first, second])
    }

    /// Atomic measure whose covariance equals that of the summed process:
    /// one atom `coef² · width` at each piece rate. Requires disjoint strips.
    pub fn equivalent_measure(&self) -> Result<AtomicMeasure> {
        if !self.is_disjoint() {
            return Err(Error::InvalidInput(
                "overlapping strips have cross terms".into(),
            ));
        }
        let mut atoms: Vec<Atom> = Vec::new();
        for p in self.components.iter().flat_map(|c| c.pieces()) {
            let mass = p.coef * p.coef * (p.hi - p.lo);
            match atoms.iter_mut().find(|a| a.p == p.rate) {
                Some(a) => a.c2 += mass,
                None => atoms.push(Atom::new(p.rate, mass)),
            }
        }
        normalize_h(&atoms)
    }

    /// Exact covariance between component sums over the index sets `left`, `right`.
    pub fn covariance(&self, left: &[usize], right: &[usize], x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        for &i in left {
            for &j in right {
                for p in self.components[i].pieces() {
                    for q in self.components[j].pieces() {
                        let overlap = p.hi.min(q.hi) - p.lo.max(q.lo);
                        if overlap > 0.0 {
                            total += p.coef * q.coef * overlap * pair_kernel(p.rate, q.rate, x, y);
                        }
                    }
                }
            }
        }
        total
    }
}
