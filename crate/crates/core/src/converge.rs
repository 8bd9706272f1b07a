//! Convergence of `log Φ_{σ_n}`, `Φ′_{σ_n}`, `Φ″_{σ_n}` along approximating
//! sequences `σ_n → σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, FiniteMeasure};
use crate::potential::{log_det_term, RiccatiFlow};
use crate::registry::Registry;
use crate::scattering::forward_map;
use crate::stochastic::{estimate_log_phi, estimate_phi_derivatives, MCConfig};

/// `log Φ`, `Φ′`, `Φ″` at `x`, with standard errors for Monte Carlo values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiPoint {
    pub x: f64,
    pub log_phi: f64,
    pub d1: f64,
    pub d2: f64,
    pub log_phi_se: f64,
    pub d1_se: f64,
    pub d2_se: f64,
}

impl PhiPoint {
    fn exact(x: f64, log_phi: f64, d1: f64, d2: f64) -> Self {
        Self {
            x,
            log_phi,
            d1,
            d2,
            log_phi_se: 0.0,
            d1_se: 0.0,
            d2_se: 0.0,
        }
    }
}

pub trait PhiEvaluator: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, sigma: &FiniteMeasure, xs: &[f64], cfg: &MCConfig) -> Result<Vec<PhiPoint>>;
}

fn atomic_only<'a>(sigma: &'a FiniteMeasure, who: &str) -> Result<&'a AtomicMeasure> {
    sigma
        .as_atomic()
        .map_err(|_| Error::UnsupportedMeasure(format!("{who} evaluator needs an atomic measure")))
}

/// Gram-determinant closed form; derivatives of `Φ` by 4th-order differences.
pub struct GramPhi {
    pub h: f64,
}

impl PhiEvaluator for GramPhi {
    fn name(&self) -> &'static str {
        "gram"
    }

    fn evaluate(&self, sigma: &FiniteMeasure, xs: &[f64], _: &MCConfig) -> Result<Vec<PhiPoint>> {
        let sigma = atomic_only(sigma, "gram")?;
        if let Some(&x) = xs.iter().find(|&&x| x < 0.0) {
            return Err(Error::NegativeTime(x));
        }
        let s = forward_map(sigma)?;
        let slope: f64 = sigma.rates().iter().sum::<f64>() + s.etas().iter().sum::<f64>();
        let l0 = log_det_term(&s, 0.0)?;
        // the closed form is analytic through x = 0, so the stencil may cross it
        let log_phi = |x: f64| -> Result<f64> {
            Ok(-0.5 * log_det_term(&s, x)? + 0.5 * l0 - 0.5 * x * slope)
        };
        let h = self.h;
        xs.iter()
            .map(|&x| {
                let f: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0]
                    .iter()
                    .map(|k| log_phi(x + k * h).map(f64::exp))
                    .collect::<Result<_>>()?;
                let d1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h);
                let d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
                Ok(PhiPoint::exact(
                    x,
                    if x == 0.0 { 0.0 } else { f[2].ln() },
                    d1,
                    d2,
                ))
            })
            .collect()
    }
}

/// Covariance-flow evaluation with exact derivatives.
pub struct RiccatiPhi;

impl PhiEvaluator for RiccatiPhi {
    fn name(&self) -> &'static str {
        "riccati"
    }

    fn evaluate(&self, sigma: &FiniteMeasure, xs: &[f64], _: &MCConfig) -> Result<Vec<PhiPoint>> {
        let sigma = atomic_only(sigma, "riccati")?;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let jets = RiccatiFlow::new(sigma).run(&sorted)?;
        let mut out = vec![PhiPoint::exact(0.0, 0.0, 0.0, 0.0); xs.len()];
        for (&i, j) in order.iter().zip(&jets) {
            out[i] = PhiPoint::exact(j.x, j.log_phi, j.phi_d1(), j.phi_d2());
        }
        Ok(out)
    }
}

/// Monte Carlo estimates of `log Φ`, `Φ′`, `Φ″`.
pub struct MonteCarloPhi;

impl PhiEvaluator for MonteCarloPhi {
    fn name(&self) -> &'static str {
        "monte_carlo"
    }

    fn evaluate(&self, sigma: &FiniteMeasure, xs: &[f64], cfg: &MCConfig) -> Result<Vec<PhiPoint>> {
        let lp = estimate_log_phi(sigma, xs, cfg)?;
        let d = estimate_phi_derivatives(sigma, xs, cfg)?;
        Ok(xs
            .iter()
            .zip(lp.iter().zip(&d))
            .map(|(&x, (l, (d1, d2)))| PhiPoint {
                x,
                log_phi: l.value,
                d1: d1.value,
                d2: d2.value,
                log_phi_se: l.stderr,
                d1_se: d1.stderr,
                d2_se: d2.stderr,
            })
            .collect())
    }
}

pub fn phi_evaluators() -> Registry<dyn PhiEvaluator> {
    let mut reg: Registry<dyn PhiEvaluator> = Registry::new("phi evaluator");
    reg.register("gram", || Box::new(GramPhi { h: 1e-3 }));
    reg.register("riccati", || Box::new(RiccatiPhi));
    reg.register("monte_carlo", || Box::new(MonteCarloPhi));
    reg.alias("closed_form", "riccati");
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    /// `σ_n = discretize(σ, n)`
    Discretize,
    /// `σ_n = mollify(σ, n)`
    Mollify,
}

impl std::str::FromStr for Sequence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discretize" => Ok(Sequence::Discretize),
            "mollify" => Ok(Sequence::Mollify),
            _ => Err(Error::InvalidInput(format!(
                "unknown sequence '{s}' (available: discretize, mollify)"
            ))),
        }
    }
}

impl Sequence {
    pub fn element(&self, sigma: &FiniteMeasure, n: usize) -> Result<FiniteMeasure> {
        match self {
            Sequence::Discretize => Ok(FiniteMeasure::from(sigma.discretize(n)?)),
            Sequence::Mollify => sigma.mollify(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub schedule: Vec<usize>,
    pub x_grid: Vec<f64>,
    pub mode: String,
    pub sequence: Sequence,
    /// `sup_x |log Φ_{σ_{n_{k+1}}} − log Φ_{σ_{n_k}}|`
    pub sup_diffs: Vec<f64>,
    pub sup_diffs_d1: Vec<f64>,
    pub sup_diffs_d2: Vec<f64>,
    /// `values[level][i]` at `x_grid[i]`.
    pub values: Vec<Vec<PhiPoint>>,
}

impl ConvergenceReport {
    /// True when the last three entries strictly decrease.
    pub fn eventually_decreasing(diffs: &[f64]) -> bool {
        diffs.len() >= 3 && diffs[diffs.len() - 3..].windows(2).all(|w| w[1] < w[0])
    }
}

pub fn run_converge(
    sigma: &FiniteMeasure,
    schedule: &[usize],
    x_grid: &[f64],
    mode: &str,
    sequence: Sequence,
    cfg: &MCConfig,
) -> Result<ConvergenceReport> {
    if schedule.len() < 2 {
        return Err(Error::InvalidInput(
            "schedule needs at least two levels".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) || schedule[0] == 0 {
        return Err(Error::InvalidInput(
            "schedule must be strictly increasing and positive".into(),
        ));
    }
    let evaluator = phi_evaluators().create(mode)?;
    let values = schedule
        .iter()
        .map(|&n| evaluator.evaluate(&sequence.element(sigma, n)?, x_grid, cfg))
        .collect::<Result<Vec<_>>>()?;
    let sup = |f: fn(&PhiPoint) -> f64| -> Vec<f64> {
        values
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (f(b) - f(a)).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    Ok(ConvergenceReport {
        schedule: schedule.to_vec(),
        x_grid: x_grid.to_vec(),
        mode: evaluator.name().to_string(),
        sequence,
        sup_diffs: sup(|p| p.log_phi),
        sup_diffs_d1: sup(|p| p.d1),
        sup_diffs_d2: sup(|p| p.d2),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Atom;

    #[test]
    fn evaluators_agree_on_small_measure() {
        let sigma =
            FiniteMeasure::from_atoms(&[Atom::new(0.4, 0.5), Atom::new(-1.0, 0.8)]).unwrap();
        let xs = [0.0, 0.5, 1.0];
        let cfg = MCConfig::default();
        let reg = phi_evaluators();
        let g = reg
            .create("gram")
            .unwrap()
            .evaluate(&sigma, &xs, &cfg)
            .unwrap();
        let r = reg
            .create("closed_form")
            .unwrap()
            .evaluate(&sigma, &xs, &cfg)
            .unwrap();
        for (a, b) in g.iter().zip(&r) {
            assert!((a.log_phi - b.log_phi).abs() < 1e-11);
            assert!((a.d1 - b.d1).abs() < 1e-8);
            assert!((a.d2 - b.d2).abs() < 1e-6);
        }
        assert!((r[0].d2 + 0.5 * 1.3).abs() < 1e-15);
    }

    #[test]
    fn grid_atoms_give_zero_differences() {
        let sigma =
            FiniteMeasure::from_atoms(&[Atom::new(0.5, 1.0), Atom::new(-1.0, 0.25)]).unwrap();
        let rep = run_converge(
            &sigma,
            &[2, 4, 8],
            &[0.5, 1.0],
            "closed_form",
            Sequence::Discretize,
            &MCConfig::default(),
        )
        .unwrap();
        assert!(rep.sup_diffs.iter().all(|&d| d == 0.0));
        assert_eq!(rep.mode, "riccati");
    }

    #[test]
    fn rejects_bad_schedule_and_mode() {
        let sigma = FiniteMeasure::from_atoms(&[Atom::new(0.5, 1.0)]).unwrap();
        let cfg = MCConfig::default();
        assert!(run_converge(
            &sigma,
            &[4, 2],
            &[1.0],
            "riccati",
            Sequence::Discretize,
            &cfg
        )
        .is_err());
        assert!(matches!(
            run_converge(&sigma, &[2, 4], &[1.0], "nope", Sequence::Discretize, &cfg),
            Err(Error::UnknownStrategy { .. })
        ));
    }
}
