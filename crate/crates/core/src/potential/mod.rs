//! Reflectionless potentials `u_s(x) = −2 (d/dx)² log det(I + G_s(x))`, the
//! Feynman–Kac functional `log Φ_σ`, and the KdV residual.

mod gram;
mod riccati;

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::registry::Registry;
use crate::scattering::{forward_map, inverse_map, kdv_evolve, ScatteringData};

pub use gram::{evaluate, log_det_term, GramEvaluator, PotentialJet};
pub use riccati::{LogPhiJet, RiccatiFlow, DEFAULT_STEP};

/// `log Φ_σ(x) = −½L(x) + ½L(0) − (x/2) Σ (p_j + η_j)` with `s = ψ̄(σ)`.
pub fn log_phi_closed(sigma: &AtomicMeasure, x: f64) -> Result<f64> {
    Ok(log_phi_closed_many(sigma, &[x])?[0])
}

pub fn log_phi_closed_many(sigma: &AtomicMeasure, xs: &[f64]) -> Result<Vec<f64>> {
    if let Some(&x) = xs.iter().find(|&&x| x < 0.0) {
        return Err(Error::NegativeTime(x));
    }
    let s = forward_map(sigma)?;
    let g = GramEvaluator::new(&s);
    let slope: f64 = sigma.rates().iter().sum::<f64>() + s.etas().iter().sum::<f64>();
    let l0 = g.log_det(0.0)?;
    xs.iter()
        .map(|&x| {
            if x == 0.0 {
                return Ok(0.0);
            }
            Ok(-0.5 * g.log_det(x)? + 0.5 * l0 - 0.5 * x * slope)
        })
        .collect()
}

/// `|v_t − (3/2) v v_x − ¼ v_xxx|` at `(x, t)` with `v = −u_{s(t)}`.
pub fn kdv_residual(s: &ScatteringData, x: f64, t: f64) -> Result<f64> {
    const DT: f64 = 1e-3;
    let v = |tt: f64| -> Result<f64> { Ok(-GramEvaluator::new(&kdv_evolve(s, tt)).potential(x)?) };
    let v_t =
        (-v(t + 2.0 * DT)? + 8.0 * v(t + DT)? - 8.0 * v(t - DT)? + v(t - 2.0 * DT)?) / (12.0 * DT);
    let jet = GramEvaluator::new(&kdv_evolve(s, t)).evaluate(x)?;
    let (v0, v_x, v_xxx) = (-jet.u, -jet.u1, -jet.u3);
    Ok((v_t - 1.5 * v0 * v_x - 0.25 * v_xxx).abs())
}

/// A potential `u` on the real line.
pub trait Potential: Send + Sync {
    fn describe(&self) -> String;

    fn u(&self, x: f64) -> Result<f64>;

    /// Values on an increasing grid.
    fn sample(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.u(x)).collect()
    }
}

/// Gram-determinant evaluation of `u_s`.
#[derive(Debug, Clone)]
pub struct GramPotential {
    eval: GramEvaluator,
}

impl GramPotential {
    pub fn new(s: &ScatteringData) -> Self {
        Self {
            eval: GramEvaluator::new(s),
        }
    }
}

impl Potential for GramPotential {
    fn describe(&self) -> String {
        format!("gram determinant, n = {}", self.eval.len())
    }

    fn u(&self, x: f64) -> Result<f64> {
        self.eval.potential(x)
    }
}

/// `u = 4 (log Φ_σ)''` on `[0, ∞)` and `u(x) = 4 (log Φ_σ̃)''(−x)` on the
/// negative axis, both from the covariance flow.
#[derive(Debug, Clone)]
pub struct RiccatiPotential {
    right: RiccatiFlow,
    left: RiccatiFlow,
    atoms: usize,
}

impl RiccatiPotential {
    pub fn new(sigma: &AtomicMeasure) -> Self {
        Self {
            right: RiccatiFlow::new(sigma),
            left: RiccatiFlow::new(&sigma.reflect()),
            atoms: sigma.len(),
        }
    }
}

impl Potential for RiccatiPotential {
    fn describe(&self) -> String {
        format!("covariance flow, {} atoms", self.atoms)
    }

    fn u(&self, x: f64) -> Result<f64> {
        Ok(self.sample(&[x])?[0])
    }

    fn sample(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("sample grid must be increasing".into()));
        }
        let split = xs.partition_point(|&x| x < 0.0);
        let neg: Vec<f64> = xs[..split].iter().rev().map(|x| -x).collect();
        let mut out: Vec<f64> = self
            .left
            .run(&neg)?
            .iter()
            .rev()
            .map(|j| j.potential())
            .collect();
        out.extend(self.right.run(&xs[split..])?.iter().map(|j| j.potential()));
        Ok(out)
    }
}

/// Tabulated `(x, u)` with linear interpolation; zero outside the table.
#[derive(Debug, Clone)]
pub struct SampledPotential {
    xs: Vec<f64>,
    us: Vec<f64>,
}

impl SampledPotential {
    pub fn new(xs: Vec<f64>, us: Vec<f64>) -> Result<Self> {
        if xs.len() != us.len() || xs.len() < 2 {
            return Err(Error::InvalidInput(
                "sampled potential needs at least two (x, u) rows".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("sample abscissae must increase".into()));
        }
        if us.iter().chain(&xs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sampled potential has non-finite entries".into(),
            ));
        }
        Ok(Self { xs, us })
    }

    /// Parses CSV with columns `x,u` (extra columns ignored, header optional).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected x,u",
                    lineno + 1
                )));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(u)) => {
                    xs.push(x);
                    us.push(u);
                }
                _ if xs.is_empty() => continue,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "line {}: not numeric",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(xs, us)
    }
}

impl Potential for SampledPotential {
    fn describe(&self) -> String {
        format!("sampled, {} points", self.xs.len())
    }

    fn u(&self, x: f64) -> Result<f64> {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return Ok(0.0);
        }
        let i = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (x - x0) / (x1 - x0);
        Ok(self.us[i - 1] * (1.0 - w) + self.us[i] * w)
    }
}

/// What a potential is built from.
#[derive(Debug, Clone)]
pub enum PotentialInput {
    Scattering(ScatteringData),
    Measure(AtomicMeasure),
}

/// Strategy turning scattering data or a measure into a potential.
pub trait PotentialSource: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, input: &PotentialInput) -> Result<Box<dyn Potential>>;
}

struct GramSource;

impl PotentialSource for GramSource {
    fn name(&self) -> &'static str {
        "gram"
    }

    fn build(&self, input: &PotentialInput) -> Result<Box<dyn Potential>> {
        let s = match input {
            PotentialInput::Scattering(s) => s.clone(),
            PotentialInput::Measure(sigma) => forward_map(sigma)?,
        };
        Ok(Box::new(GramPotential::new(&s)))
    }
}

struct RiccatiSource;

impl PotentialSource for RiccatiSource {
    fn name(&self) -> &'static str {
        "riccati"
    }

    fn build(&self, input: &PotentialInput) -> Result<Box<dyn Potential>> {
        let sigma = match input {
            PotentialInput::Scattering(s) => inverse_map(s)?,
            PotentialInput::Measure(sigma) => sigma.clone(),
        };
        Ok(Box::new(RiccatiPotential::new(&sigma)))
    }
}

pub fn potential_sources() -> Registry<dyn PotentialSource> {
    let mut reg: Registry<dyn PotentialSource> = Registry::new("potential source");
    reg.register("gram", || Box::new(GramSource));
    reg.register("riccati", || Box::new(RiccatiSource));
    reg
}
