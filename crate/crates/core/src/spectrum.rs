//! Lowest eigenvalues of `−(d/dx)² + u` on `[−L, L]` with Dirichlet ends.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::potential::{Potential, RiccatiPotential};
use crate::scattering::forward_map;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub h: f64,
    pub potential_id: String,
}

/// Symmetric tridiagonal matrix: `diag` and off-diagonal value `off`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    /// Number of eigenvalues strictly below `lambda` (Sturm count).
    fn count_below(&self, lambda: f64) -> usize {
        let off2 = self.off * self.off;
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 {
                d - lambda
            } else {
                d - lambda - off2 / q
            };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + lambda.abs()).max(1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - r));
        let hi = self
            .diag
            .iter()
            .fold(f64::NEG_INFINITY, |m, &d| m.max(d + r));
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based), by bisection.
    fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Interior grid points `−L + ih`, `i = 1..N−1`, for the step nearest to `h`
/// that divides `2L`.
pub fn interior_grid(l: f64, h: f64) -> Vec<f64> {
    let n = (2.0 * l / h).round().max(2.0) as usize;
    let step = 2.0 * l / n as f64;
    (1..n).map(|i| -l + i as f64 * step).collect()
}

/// Lowest `k` eigenvalues of the 3-point discretization of `−(d/dx)² + u`.
pub fn schrodinger_eigs(u: &dyn Potential, l: f64, h: f64, k: usize) -> Result<SpectrumReport> {
    if !(l > 0.0 && h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need L > 0 and h > 0, got L = {l}, h = {h}"
        )));
    }
    let limit = l / 100.0;
    if h > limit {
        return Err(Error::GridTooCoarse { h, limit });
    }
    let xs = interior_grid(l, h);
    if k == 0 || k > xs.len() {
        return Err(Error::InvalidInput(format!(
            "k must be in 1..={}",
            xs.len()
        )));
    }
    let step = 2.0 * l / (xs.len() + 1) as f64;
    let values = u.sample(&xs)?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow(format!(
            "potential value {v} on the grid"
        )));
    }
    let inv_h2 = 1.0 / (step * step);
    let t = Tridiagonal {
        diag: values.iter().map(|v| 2.0 * inv_h2 + v).collect(),
        off: -inv_h2,
    };
    Ok(SpectrumReport {
        eigenvalues: (0..k).map(|i| t.eigenvalue(i)).collect(),
        l,
        h: step,
        potential_id: u.describe(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub index: usize,
    pub atoms: usize,
    pub mass: f64,
    pub max_rate: f64,
    pub max_eta_sq: f64,
    /// `M(σ_n)² + σ_n(ℝ)`
    pub algebraic_bound: f64,
    pub algebraic_pass: bool,
    pub ground_state: f64,
    /// `−β² − σ(ℝ) − ε − tolerance`
    pub spectral_floor: f64,
    pub spectral_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBoundReport {
    pub beta: f64,
    pub limit_mass: f64,
    pub eps: f64,
    pub checks: Vec<BoundCheck>,
}

impl SpectralBoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.algebraic_pass && c.spectral_pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub l: f64,
    pub h: f64,
    pub fd_tolerance: f64,
    /// `σ(ℝ)`; the last element's mass when `None`.
    pub limit_mass: Option<f64>,
    /// `β`; the largest `M(σ_n)` when `None`.
    pub beta: Option<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            l: 15.0,
            h: 15.0 / 3000.0,
            fd_tolerance: 1e-3,
            limit_mass: None,
            beta: None,
        }
    }
}

/// Checks `max η² ≤ M(σ_n)² + σ_n(ℝ)` and the FD ground state against
/// `−β² − σ(ℝ) − ε` for each element of the sequence.
pub fn verify_spectral_bound(
    seq: &[AtomicMeasure],
    eps: f64,
    opts: &BoundOptions,
) -> Result<SpectralBoundReport> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty measure sequence".into()));
    }
    let limit_mass = opts
        .limit_mass
        .unwrap_or_else(|| seq.last().unwrap().total_mass());
    let beta = opts
        .beta
        .unwrap_or_else(|| seq.iter().map(|s| s.max_rate()).fold(0.0, f64::max));
    let floor = -beta * beta - limit_mass - eps - opts.fd_tolerance;
    let mut checks = Vec::with_capacity(seq.len());
    for (index, sigma) in seq.iter().enumerate() {
        let s = forward_map(sigma)?;
        let max_eta_sq = s.etas().iter().map(|e| e * e).fold(0.0, f64::max);
        let m = sigma.max_rate();
        let algebraic_bound = m * m + sigma.total_mass();
        let u = RiccatiPotential::new(sigma);
        let ground_state = schrodinger_eigs(&u, opts.l, opts.h, 1)?.eigenvalues[0];
        checks.push(BoundCheck {
            index,
            atoms: sigma.len(),
            mass: sigma.total_mass(),
            max_rate: m,
            max_eta_sq,
            algebraic_bound,
            algebraic_pass: max_eta_sq <= algebraic_bound + 1e-12,
            ground_state,
            spectral_floor: floor,
            spectral_pass: ground_state >= floor,
        });
    }
    Ok(SpectralBoundReport {
        beta,
        limit_mass,
        eps,
        checks,
    })
}
