//! Numerical inversion of the forward map.
//!
//! Given `{κ_j, m_j}`, the non-paired branch of the norming-constant formula
//! says `∏_k (p_k + κ_i)/(p_k − κ_i) = w_i` with `w_i` known from the data,
//! i.e. `P(−κ_i) = w_i P(κ_i)` for the monic polynomial `P` with roots
//! `p_k`. Masses follow from the residues of the polynomial identity
//! `∏(z − κ²) = ∏(z − p²)(1 − Σ c²/(z − p²))`.

use nalgebra::{DMatrix, DVector};

use super::forward::{forward_map, ScaledProduct};
use super::ScatteringData;
use crate::error::{Error, Result};
use crate::measures::{normalize_h, Atom, AtomicMeasure};
use crate::registry::Registry;

/// Relative round-trip tolerance an inversion result must meet.
pub const ROUND_TRIP_TOL: f64 = 1e-8;

pub trait InverseSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, s: &ScatteringData) -> Result<AtomicMeasure>;
}

pub fn inverse_solvers() -> Registry<dyn InverseSolver> {
    let mut reg: Registry<dyn InverseSolver> = Registry::new("inverse solver");
    reg.register("polynomial", || Box::new(PolynomialSolver));
    reg.register("newton", || Box::new(NewtonSolver::default()));
    reg
}

/// Polynomial solve first, multi-start Newton as fallback; the result is
/// checked against the forward map.
pub fn inverse_map(s: &ScatteringData) -> Result<AtomicMeasure> {
    match inverse_map_with(&PolynomialSolver, s) {
        Ok(sigma) => Ok(sigma),
        Err(first) => inverse_map_with(&NewtonSolver::default(), s).map_err(|second| {
            Error::NoConvergence(format!("polynomial: {first}; newton: {second}"))
        }),
    }
}

pub fn inverse_map_with(solver: &dyn InverseSolver, s: &ScatteringData) -> Result<AtomicMeasure> {
    let sigma = solver.solve(s)?;
    let back = forward_map(&sigma)?;
    let err = back.max_relative_diff(s);
    if err <= ROUND_TRIP_TOL {
        Ok(sigma)
    } else {
        Err(Error::NoConvergence(format!(
            "{} solver round trip error {err:.3e}",
            solver.name()
        )))
    }
}

/// Shared data derived from `s`.
struct Target {
    kappa: Vec<f64>,
    m: Vec<f64>,
    /// `ln |w_i|` with `w_i = −m_i / (2κ_i ∏_{k≠i} (κ_k+κ_i)/(κ_k−κ_i))`
    ln_w: Vec<f64>,
    w: Vec<f64>,
}

impl Target {
    fn new(s: &ScatteringData) -> Self {
        let kappa = s.etas();
        let m = s.norming();
        let n = kappa.len();
        let mut ln_w = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let mut prod = ScaledProduct::new(2.0 * kappa[i]);
            for k in (0..n).filter(|&k| k != i) {
                prod.mul((kappa[k] + kappa[i]) / (kappa[k] - kappa[i]));
            }
            ln_w.push(m[i].ln() - prod.ln_abs());
            // sign of w_i is −sign(prod) = (−1)^i
            let sign = -prod.signum();
            w.push(sign * (m[i].ln() - prod.ln_abs()).exp());
        }
        Self { kappa, m, ln_w, w }
    }

    fn n(&self) -> usize {
        self.kappa.len()
    }

    /// `2κ_α ∏_{k≠α} (κ_k+κ_α)/(κ_k−κ_α)` for the paired branch.
    fn pair_prefactor(&self, alpha: usize) -> ScaledProduct {
        let mut prod = ScaledProduct::new(2.0 * self.kappa[alpha]);
        for k in (0..self.n()).filter(|&k| k != alpha) {
            prod.mul((self.kappa[k] + self.kappa[alpha]) / (self.kappa[k] - self.kappa[alpha]));
        }
        prod
    }
}

/// Candidate configuration: rates in box order (not yet in (H) order) plus
/// the box indices `α` where a pair `(κ_α, −κ_α)` sits.
#[derive(Debug, Clone)]
struct Configuration {
    rates: Vec<f64>,
    pairs: Vec<usize>,
}

impl Configuration {
    fn is_paired(&self, box_index: usize) -> bool {
        self.pairs
            .iter()
            .any(|&a| a == box_index || a + 1 == box_index)
    }
}

/// `ln |∏_k (p_k + κ)/(p_k − κ)|` over the given rates.
fn ln_ratio_product(rates: &[f64], kappa: f64) -> f64 {
    rates
        .iter()
        .map(|&p| ((p + kappa) / (p - kappa)).abs().ln())
        .sum()
}

/// Assemble masses from residues and pair ratios; fails on nonpositive mass.
fn assemble(t: &Target, cfg: &Configuration) -> Result<AtomicMeasure> {
    let n = t.n();
    let kappa = &t.kappa;
    let rates = &cfg.rates;
    let mut atoms = Vec::with_capacity(n);
    for alpha in 0..n {
        if cfg.is_paired(alpha) {
            continue;
        }
        let p = rates[alpha];
        let a = p.abs();
        // c² = −∏_j (p² − κ_j²) / ∏_{β≠α} (p² − p_β²)
        let mut prod = ScaledProduct::new(-1.0);
        for &kj in kappa {
            prod.mul((a - kj) * (a + kj));
        }
        for (beta, &q) in rates.iter().enumerate() {
            if beta != alpha {
                let b = q.abs();
                prod.div((a - b) * (a + b));
            }
        }
        let c2 = prod.value();
        if !(c2 > 0.0) || !c2.is_finite() {
            return Err(Error::NoConvergence(format!(
                "residue mass {c2} at p = {p} is not positive"
            )));
        }
        atoms.push(Atom::new(p, c2));
    }
    for &alpha in &cfg.pairs {
        let k = kappa[alpha];
        // merged mass: C = −∏_{i≠α} (κ² − κ_i²) / ∏_{β∉pair} (κ² − p_β²)
        let mut merged = ScaledProduct::new(-1.0);
        for (i, &ki) in kappa.iter().enumerate() {
            if i != alpha {
                merged.mul((k - ki) * (k + ki));
            }
        }
        let mut others = ScaledProduct::new(1.0);
        for (beta, &q) in rates.iter().enumerate() {
            if beta != alpha && beta != alpha + 1 {
                let b = q.abs();
                merged.div((k - b) * (k + b));
                others.mul((q + k) / (q - k));
            }
        }
        let total = merged.value();
        // m_α = 2κ (c²₋/c²₊) ∏_{k≠α}(κ_k+κ)/(κ_k−κ) ∏_{β∉pair}(p_β+κ)/(p_β−κ)
        let mut denom = t.pair_prefactor(alpha);
        denom.mul(others.value());
        let ratio = t.m[alpha] / denom.value();
        if !(total > 0.0) || !(ratio > 0.0) || !total.is_finite() || !ratio.is_finite() {
            return Err(Error::NoConvergence(format!(
                "pair at kappa = {k} gives mass {total} and ratio {ratio}"
            )));
        }
        atoms.push(Atom::new(k, total / (1.0 + ratio)));
        atoms.push(Atom::new(-k, total * ratio / (1.0 + ratio)));
    }
    normalize_h(&atoms).map_err(|e| Error::NoConvergence(format!("invalid candidate: {e}")))
}

/// Residuals `ln|W_i(p)| − ln|w_i|` over the non-paired equations, and the
/// Jacobian with respect to the free (non-paired) rates.
fn residual_and_jacobian(
    t: &Target,
    cfg: &Configuration,
    free: &[usize],
    equations: &[usize],
) -> (DVector<f64>, DMatrix<f64>) {
    let free_rates: Vec<f64> = free.iter().map(|&a| cfg.rates[a]).collect();
    let mut r = DVector::zeros(equations.len());
    let mut j = DMatrix::zeros(equations.len(), free.len());
    for (row, &i) in equations.iter().enumerate() {
        let k = t.kappa[i];
        r[row] = ln_ratio_product(&free_rates, k) - t.ln_w[i];
        for (col, &p) in free_rates.iter().enumerate() {
            j[(row, col)] = -2.0 * k / ((p - k) * (p + k));
        }
    }
    (r, j)
}

/// Least-squares solve of `J x = b`; `None` on non-finite input.
fn least_squares(j: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if j.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let x = j.svd(true, true).solve(b, 1e-14).ok()?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Gauss–Newton polish of the free rates with the pair positions fixed.
fn polish(t: &Target, cfg: &mut Configuration) {
    let n = t.n();
    let free: Vec<usize> = (0..n).filter(|&a| !cfg.is_paired(a)).collect();
    let equations: Vec<usize> = (0..n).filter(|i| !cfg.pairs.contains(i)).collect();
    if free.is_empty() {
        return;
    }
    for _ in 0..30 {
        let (r, j) = residual_and_jacobian(t, cfg, &free, &equations);
        let norm = r.amax();
        if !norm.is_finite() || norm < 1e-15 {
            return;
        }
        let Some(step) = least_squares(j, &(-&r)) else {
            return;
        };
        let mut next = cfg.clone();
        for (col, &a) in free.iter().enumerate() {
            next.rates[a] += step[col];
        }
        let (r2, _) = residual_and_jacobian(t, &next, &free, &equations);
        if !(r2.amax() < norm) {
            return;
        }
        *cfg = next;
    }
}

/// Linear solve for the monic polynomial with roots `p_k`, then companion
/// eigenvalues.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolynomialSolver;

impl PolynomialSolver {
    fn roots(t: &Target) -> Result<Vec<f64>> {
        let n = t.n();
        let scale = t.kappa[n - 1];
        // P(z) = scale^n P̂(z/scale), P̂ monic with coefficients a_0..a_{n−1}
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for i in 0..n {
            let z = t.kappa[i] / scale;
            let w = t.w[i];
            let row_scale = 1.0 / (1.0 + w.abs());
            for k in 0..=n {
                let pos = z.powi(k as i32);
                let neg = (-z).powi(k as i32);
                let coef = (neg - w * pos) * row_scale;
                if k < n {
                    a[(i, k)] = coef;
                } else {
                    b[i] = -coef;
                }
            }
        }
        if a.iter().chain(b.iter()).any(|v: &f64| !v.is_finite()) {
            return Err(Error::NoConvergence(
                "polynomial system is not finite".into(),
            ));
        }
        let coeffs = a
            .svd(true, true)
            .solve(&b, 1e-300)
            .map_err(|e| Error::NoConvergence(format!("polynomial system: {e}")))?;
        let mut companion = DMatrix::zeros(n, n);
        for k in 0..n {
            companion[(0, k)] = -coeffs[n - 1 - k];
        }
        for k in 1..n {
            companion[(k, k - 1)] = 1.0;
        }
        let eig = companion.complex_eigenvalues();
        let mut roots = Vec::with_capacity(n);
        for z in eig.iter() {
            if z.im.abs() > 1e-6 * z.re.abs().max(1.0) {
                return Err(Error::NoConvergence(format!(
                    "polynomial root {z} is not real"
                )));
            }
            roots.push(z.re * scale);
        }
        roots.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        Ok(roots)
    }

    /// Snap roots sitting at `±κ_α` on both sides of a box boundary.
    fn snap_pairs(t: &Target, rates: &[f64]) -> Option<Configuration> {
        let n = t.n();
        let mut out = rates.to_vec();
        let mut pairs = Vec::new();
        let mut alpha = 0;
        while alpha + 1 < n {
            let k = t.kappa[alpha];
            let (x, y) = (rates[alpha], rates[alpha + 1]);
            let near = |v: f64| (v.abs() - k).abs() <= 1e-6 * k;
            if near(x) && near(y) && x.signum() != y.signum() {
                out[alpha] = k;
                out[alpha + 1] = -k;
                pairs.push(alpha);
                alpha += 2;
            } else {
                alpha += 1;
            }
        }
        (!pairs.is_empty()).then_some(Configuration { rates: out, pairs })
    }
}

impl InverseSolver for PolynomialSolver {
    fn name(&self) -> &'static str {
        "polynomial"
    }

    fn solve(&self, s: &ScatteringData) -> Result<AtomicMeasure> {
        let t = Target::new(s);
        let roots = Self::roots(&t)?;
        let mut candidates = vec![Configuration {
            rates: roots.clone(),
            pairs: Vec::new(),
        }];
        if let Some(snapped) = Self::snap_pairs(&t, &roots) {
            candidates.push(snapped);
        }
        let mut last_err = None;
        for mut cfg in candidates {
            polish(&t, &mut cfg);
            match assemble(&t, &cfg).and_then(|sigma| {
                let back = forward_map(&sigma)?;
                if back.max_relative_diff(s) <= ROUND_TRIP_TOL {
                    Ok(sigma)
                } else {
                    Err(Error::NoConvergence("round trip mismatch".into()))
                }
            }) {
                Ok(sigma) => return Ok(sigma),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap())
    }
}

/// Multi-start Newton over sign patterns, each `|p_α|` confined to its
/// bracket `(κ_{α−1}, κ_α)` through a logistic parametrization.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSolver {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewtonSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl NewtonSolver {
    fn bracket(t: &Target, alpha: usize) -> (f64, f64) {
        let lo = if alpha == 0 { 0.0 } else { t.kappa[alpha - 1] };
        (lo, t.kappa[alpha])
    }

    /// Damped Newton in the unconstrained variables `u` for the free boxes.
    fn run(
        &self,
        t: &Target,
        free: &[usize],
        signs: &[f64],
        base: &Configuration,
    ) -> (Configuration, f64) {
        let equations: Vec<usize> = (0..t.n()).filter(|i| !base.pairs.contains(i)).collect();
        let build = |u: &[f64]| {
            let mut cfg = base.clone();
            for (idx, &a) in free.iter().enumerate() {
                let (lo, hi) = Self::bracket(t, a);
                cfg.rates[a] = signs[idx] * (lo + (hi - lo) * logistic(u[idx]));
            }
            cfg
        };
        let mut u = vec![0.0; free.len()];
        let mut cfg = build(&u);
        let (mut r, _) = residual_and_jacobian(t, &cfg, free, &equations);
        for _ in 0..self.max_iter {
            let norm = r.amax();
            if norm < 0.1 * self.tol {
                break;
            }
            let (_, jp) = residual_and_jacobian(t, &cfg, free, &equations);
            // chain rule through the logistic map
            let mut j = jp;
            for (col, &a) in free.iter().enumerate() {
                let (lo, hi) = Self::bracket(t, a);
                let s = logistic(u[col]);
                let d = signs[col] * (hi - lo) * s * (1.0 - s);
                for row in 0..j.nrows() {
                    j[(row, col)] *= d;
                }
            }
            let Some(step) = least_squares(j, &(-&r)) else {
                break;
            };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(step.iter())
                    .map(|(a, b)| a + lambda * b.clamp(-20.0, 20.0))
                    .collect();
                let c = build(&trial);
                let (r2, _) = residual_and_jacobian(t, &c, free, &equations);
                if r2.amax() < norm {
                    u = trial;
                    cfg = c;
                    r = r2;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let norm = r.amax();
        (cfg, norm)
    }

    /// Box boundaries `κ_α` that both neighbouring rates are pressing on.
    fn boundary_hits(t: &Target, cfg: &Configuration) -> Vec<usize> {
        let n = t.n();
        let mut hits = Vec::new();
        let mut alpha = 0;
        while alpha + 1 < n {
            if cfg.is_paired(alpha) || cfg.is_paired(alpha + 1) {
                alpha += 1;
                continue;
            }
            let k2 = t.kappa[alpha] * t.kappa[alpha];
            let below = (k2 - cfg.rates[alpha].powi(2)) / k2;
            let above = (cfg.rates[alpha + 1].powi(2) - k2) / k2;
            if below < 1e-8 || above < 1e-8 {
                hits.push(alpha);
                alpha += 2;
            } else {
                alpha += 1;
            }
        }
        hits
    }

    /// Run one sign pattern; returns the converged measure or the box
    /// boundaries the iterate was pressing on.
    fn try_pattern(
        &self,
        t: &Target,
        pairs: &[usize],
        pattern: u64,
    ) -> std::result::Result<AtomicMeasure, Vec<usize>> {
        let n = t.n();
        let mut base = Configuration {
            rates: vec![0.0; n],
            pairs: pairs.to_vec(),
        };
        for &a in pairs {
            base.rates[a] = t.kappa[a];
            base.rates[a + 1] = -t.kappa[a];
        }
        let free: Vec<usize> = (0..n).filter(|&a| !base.is_paired(a)).collect();
        let signs: Vec<f64> = (0..free.len())
            .map(|bit| if pattern >> bit & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let (cfg, norm) = self.run(t, &free, &signs, &base);
        let hits = Self::boundary_hits(t, &cfg);
        if norm < self.tol && hits.is_empty() {
            if let Ok(sigma) = assemble(t, &cfg) {
                return Ok(sigma);
            }
        }
        Err(hits)
    }
}

impl InverseSolver for NewtonSolver {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn solve(&self, s: &ScatteringData) -> Result<AtomicMeasure> {
        let t = Target::new(s);
        let n = t.n();
        if n > 20 {
            return Err(Error::InvalidInput(
                "multi-start Newton is limited to n <= 20".into(),
            ));
        }
        let mut queue: Vec<Vec<usize>> = vec![Vec::new()];
        let mut seen = queue.clone();
        while let Some(pairs) = queue.pop() {
            let free = n - 2 * pairs.len();
            for pattern in 0..(1u64 << free) {
                match self.try_pattern(&t, &pairs, pattern) {
                    Ok(sigma) => return Ok(sigma),
                    Err(hits) if !hits.is_empty() => {
                        let mut next = pairs.clone();
                        next.extend(hits);
                        next.sort_unstable();
                        if !seen.contains(&next) {
                            seen.push(next.clone());
                            queue.insert(0, next);
                        }
                    }
                    Err(_) => {}
                }
            }
        }
        Err(Error::NoConvergence(format!(
            "multi-start Newton failed on all {} sign patterns",
            1u64 << n
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(v: &[(f64, f64)]) -> ScatteringData {
        ScatteringData::from_pairs(v).unwrap()
    }

    fn assert_atoms(sigma: &AtomicMeasure, expected: &[(f64, f64)]) {
        assert_eq!(sigma.len(), expected.len(), "{sigma:?}");
        for (a, &(p, c2)) in sigma.atoms().iter().zip(expected) {
            assert!((a.p - p).abs() < 1e-9, "{sigma:?}");
            assert!((a.c2 - c2).abs() < 1e-9 * c2.max(1.0), "{sigma:?}");
        }
    }

    #[test]
    fn examples_with_both_solvers() {
        let reg = inverse_solvers();
        for name in ["polynomial", "newton"] {
            let solver = reg.create(name).unwrap();
            let sigma = inverse_map_with(solver.as_ref(), &data(&[(1.0, 8.0)])).unwrap();
            assert_atoms(&sigma, &[(0.6, 0.64)]);
            let sigma =
                inverse_map_with(solver.as_ref(), &data(&[(1.0, 6.0), (2.0, 12.0)])).unwrap();
            assert_atoms(&sigma, &[(1.0, 1.5), (-1.0, 1.5)]);
            let sigma = inverse_map_with(solver.as_ref(), &data(&[(1.0, 2.0)])).unwrap();
            assert_atoms(&sigma, &[(0.0, 1.0)]);
        }
    }

    #[test]
    fn asymmetric_pair_round_trip() {
        let atoms = [
            Atom::new(0.4, 0.3),
            Atom::new(1.2, 0.7),
            Atom::new(-1.2, 1.9),
        ];
        let sigma = normalize_h(&atoms).unwrap();
        let s = forward_map(&sigma).unwrap();
        for solver in [
            &PolynomialSolver as &dyn InverseSolver,
            &NewtonSolver::default(),
        ] {
            let back = inverse_map_with(solver, &s).unwrap();
            assert_eq!(back.m_pairs(), 1, "{}", solver.name());
            for (a, b) in back.atoms().iter().zip(sigma.atoms()) {
                assert!((a.p - b.p).abs() < 1e-8 && (a.c2 - b.c2).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_nothing_valid() {
        // arbitrary data in the admissible set always inverts
        let s = data(&[(0.3, 0.01), (0.9, 50.0), (1.7, 3.0)]);
        let sigma = inverse_map(&s).unwrap();
        assert!(forward_map(&sigma).unwrap().max_relative_diff(&s) < 1e-8);
    }
}
