use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// `log Φ` and its first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPhiJet {
    pub x: f64,
    pub log_phi: f64,
    pub d1: f64,
    pub d2: f64,
}

impl LogPhiJet {
    pub fn phi(&self) -> f64 {
        self.log_phi.exp()
    }

    pub fn phi_d1(&self) -> f64 {
        self.phi() * self.d1
    }

    pub fn phi_d2(&self) -> f64 {
        self.phi() * (self.d2 + self.d1 * self.d1)
    }

    /// `4 (log Φ)''`.
    pub fn potential(&self) -> f64 {
        4.0 * self.d2
    }
}

/// Deterministic flow for `Φ_σ(x) = E exp(−½∫₀ˣ X²)` with `X = ⟨c, ξ⟩`:
///
/// `Σ' = DΣ + ΣD + I − Σccᵀ Σ`, `Σ(0) = 0`, `(log Φ)' = −½ cᵀΣc`.
#[derive(Debug, Clone)]
pub struct RiccatiFlow {
    p: Vec<f64>,
    c: Vec<f64>,
    mass: f64,
    step: f64,
}

impl RiccatiFlow {
    pub fn new(sigma: &AtomicMeasure) -> Self {
        Self::with_step(sigma, DEFAULT_STEP)
    }

    pub fn with_step(sigma: &AtomicMeasure, step: f64) -> Self {
        let p = sigma.rates();
        let c = sigma.atoms().iter().map(|a| a.c2.sqrt()).collect();
        Self {
            p,
            c,
            mass: sigma.total_mass(),
            step,
        }
    }

    fn n(&self) -> usize {
        self.p.len()
    }

    /// Writes `Σ'` into `out`, returns `cᵀΣc`.
    fn rhs(&self, sigma: &[f64], v: &mut [f64], out: &mut [f64]) -> f64 {
        let n = self.n();
        for i in 0..n {
            let row = &sigma[i * n..(i + 1) * n];
            v[i] = row.iter().zip(&self.c).map(|(s, c)| s * c).sum();
        }
        for i in 0..n {
            let (pi, vi) = (self.p[i], v[i]);
            let row = &sigma[i * n..(i + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                o[j] = (pi + self.p[j]) * row[j] - vi * v[j];
            }
            o[i] += 1.0;
        }
        self.c.iter().zip(v.iter()).map(|(c, v)| c * v).sum()
    }

    fn jet(&self, x: f64, sigma: &[f64], log_phi: f64, v: &mut [f64]) -> LogPhiJet {
        let n = self.n();
        for i in 0..n {
            let row = &sigma[i * n..(i + 1) * n];
            v[i] = row.iter().zip(&self.c).map(|(s, c)| s * c).sum();
        }
        let q: f64 = self.c.iter().zip(v.iter()).map(|(c, v)| c * v).sum();
        // cᵀDΣc
        let dq: f64 = (0..n).map(|i| self.c[i] * self.p[i] * v[i]).sum();
        LogPhiJet {
            x,
            log_phi,
            d1: -0.5 * q,
            d2: -0.5 * (2.0 * dq + self.mass - q * q),
        }
    }

    /// Jets at the nondecreasing points `xs ≥ 0`.
    pub fn run(&self, xs: &[f64]) -> Result<Vec<LogPhiJet>> {
        if let Some(&x) = xs.iter().find(|&&x| x < 0.0) {
            return Err(Error::NegativeTime(x));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(
                "evaluation points must be nondecreasing".into(),
            ));
        }
        let n = self.n();
        let nn = n * n;
        let mut sigma = vec![0.0; nn];
        let mut log_phi = 0.0;
        let mut v = vec![0.0; n];
        let mut k = [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]];
        let mut tmp = vec![0.0; nn];
        let mut x = 0.0;
        let mut out = Vec::with_capacity(xs.len());
        for &target in xs {
            let span = target - x;
            let steps = (span / self.step).ceil() as usize;
            let h = if steps > 0 { span / steps as f64 } else { 0.0 };
            for _ in 0..steps {
                let mut q = [0.0; 4];
                q[0] = self.rhs(&sigma, &mut v, &mut k[0]);
                for (stage, frac) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
                    let prev = &k[stage - 1];
                    for idx in 0..nn {
                        tmp[idx] = sigma[idx] + frac * h * prev[idx];
                    }
                    let (_, rest) = k.split_at_mut(stage);
                    q[stage] = self.rhs(&tmp, &mut v, &mut rest[0]);
                }
                for idx in 0..nn {
                    sigma[idx] +=
                        h / 6.0 * (k[0][idx] + 2.0 * k[1][idx] + 2.0 * k[2][idx] + k[3][idx]);
                }
                log_phi += -0.5 * h / 6.0 * (q[0] + 2.0 * q[1] + 2.0 * q[2] + q[3]);
            }
            x = target;
            if sigma.iter().any(|s| !s.is_finite()) || !log_phi.is_finite() {
                return Err(Error::NumericalOverflow(format!(
                    "covariance flow diverged before x = {target}"
                )));
            }
            out.push(self.jet(target, &sigma, log_phi, &mut v));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{normalize_h, Atom};

    #[test]
    fn brownian_motion_matches_cameron_martin() {
        let sigma = normalize_h(&[Atom::new(0.0, 1.0)]).unwrap();
        let xs = [0.0, 0.5, 1.0, 2.0];
        let jets = RiccatiFlow::new(&sigma).run(&xs).unwrap();
        for j in &jets {
            let x = j.x;
            assert!((j.log_phi + 0.5 * x.cosh().ln()).abs() < 1e-12);
            assert!((j.d1 + 0.5 * x.tanh()).abs() < 1e-12);
            assert!((j.d2 + 0.5 / x.cosh().powi(2)).abs() < 1e-12);
        }
        assert_eq!(jets[0].log_phi, 0.0);
        assert_eq!(jets[0].d2, -0.5);
    }

    #[test]
    fn rejects_negative_and_unsorted_points() {
        let sigma = normalize_h(&[Atom::new(0.5, 1.0)]).unwrap();
        let flow = RiccatiFlow::new(&sigma);
        assert!(matches!(flow.run(&[-0.1]), Err(Error::NegativeTime(_))));
        assert!(flow.run(&[1.0, 0.5]).is_err());
    }
}
