use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scattering::ScatteringData;

/// Highest derivative of `log det(I + G_s(x))` that is available.
pub const MAX_ORDER: usize = 5;

/// `x` below `−X_LIMIT/η₁` is rejected as numerically out of range.
const X_LIMIT: f64 = 300.0;

/// Monomial in the quantities `s_jk = aᵀEʲ(I+G)⁻¹Eᵏa`, stored as sorted
/// index pairs with `j ≤ k`.
type Monomial = Vec<(u8, u8)>;
type Poly = BTreeMap<Monomial, f64>;

fn pair(j: u8, k: u8) -> (u8, u8) {
    (j.min(k), j.max(k))
}

fn add_term(poly: &mut Poly, mut mono: Monomial, coef: f64) {
    mono.sort_unstable();
    let entry = poly.entry(mono).or_insert(0.0);
    *entry += coef;
}

/// `d/dx` using `s_jk' = −s_{j+1,k} − s_{j,k+1} + s_{j0} s_{0k}`.
fn differentiate(poly: &Poly) -> Poly {
    let mut out = Poly::new();
    for (mono, &coef) in poly {
        for (idx, &(j, k)) in mono.iter().enumerate() {
            let rest: Monomial = mono
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != idx)
                .map(|(_, &f)| f)
                .collect();
            let mut a = rest.clone();
            a.push(pair(j + 1, k));
            add_term(&mut out, a, -coef);
            let mut b = rest.clone();
            b.push(pair(j, k + 1));
            add_term(&mut out, b, -coef);
            let mut c = rest;
            c.push(pair(j, 0));
            c.push(pair(0, k));
            add_term(&mut out, c, coef);
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

/// `L', L'', …, L⁽⁵⁾` as polynomials in `s_jk`.
fn derivative_polys() -> &'static [Poly] {
    static POLYS: OnceLock<Vec<Poly>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut first = Poly::new();
        first.insert(vec![(0, 0)], -1.0);
        let mut polys = vec![first];
        while polys.len() < MAX_ORDER {
            let next = differentiate(polys.last().unwrap());
            polys.push(next);
        }
        polys
    })
}

/// Derivatives of `u = −2L''` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialJet {
    pub u: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

/// Evaluator of `L(x) = log det(I + G_s(x))` and its derivatives.
///
/// With `a_i(x) = √m_i e^{−η_i x}` and `S = diag(max(a_i, 1))`, the matrix
/// `B = S⁻¹(I+G)S⁻¹ = S⁻² + (ããᵀ)∘Ĝ` stays bounded for every `x`.
/// Evaluates `L(x) = log det(I + G_s(x))` and its derivatives.
///
/// With `m̃_j = w_j² / m_j`, `w_j = 2η_j ∏_{k≠j} (η_k + η_j)/(η_k − η_j)`,
/// `L_s(x) = L_s̃(−x) + log det G_s(x)`, and `log det G_s(x)` is linear in `x`.
/// Each point is evaluated in whichever orientation keeps `G` small.
#[derive(Debug, Clone)]
pub struct GramEvaluator {
    eta: Vec<f64>,
    half_ln_m: Vec<f64>,
    dual_half_ln_m: Vec<f64>,
    /// `log det G_s(0)`
    ln_det_g0: f64,
    g_hat: DMatrix<f64>,
}

struct Scaled {
    /// `Σ ln S_i`
    ln_scale: f64,
    a: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GramEvaluator {
    pub fn new(s: &ScatteringData) -> Self {
        let eta = s.etas();
        let half_ln_m: Vec<f64> = s.norming().iter().map(|m| 0.5 * m.ln()).collect();
        let n = eta.len();
        let g_hat = DMatrix::from_fn(n, n, |i, j| 1.0 / (eta[i] + eta[j]));
        let ln_w: Vec<f64> = (0..n)
            .map(|j| {
                let mut acc = (2.0 * eta[j]).ln();
                for k in (0..n).filter(|&k| k != j) {
                    acc += ((eta[k] + eta[j]) / (eta[k] - eta[j])).abs().ln();
                }
                acc
            })
            .collect();
        let dual_half_ln_m = ln_w.iter().zip(&half_ln_m).map(|(w, h)| w - h).collect();
        // Cauchy determinant ∏_{i<j} (η_i − η_j)² / ∏_{i,j} (η_i + η_j)
        let mut ln_det_hat = 0.0;
        for i in 0..n {
            for j in 0..n {
                ln_det_hat -= (eta[i] + eta[j]).ln();
                if i < j {
                    ln_det_hat += 2.0 * (eta[j] - eta[i]).abs().ln();
                }
            }
        }
        let ln_det_g0 = 2.0 * half_ln_m.iter().sum::<f64>() + ln_det_hat;
        Self {
            eta,
            half_ln_m,
            dual_half_ln_m,
            ln_det_g0,
            g_hat,
        }
    }

    /// True when the reflected data at `−x` give the better-scaled matrix.
    fn use_dual(&self, x: f64) -> bool {
        let excess = |h: &[f64], x: f64| -> f64 {
            h.iter()
                .zip(&self.eta)
                .map(|(h, e)| (h - e * x).max(0.0))
                .sum()
        };
        excess(&self.dual_half_ln_m, -x) < excess(&self.half_ln_m, x)
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `G_s(x)` formed directly (no scaling); for small problems and tests.
    pub fn gram(&self, x: f64) -> DMatrix<f64> {
        let a: Vec<f64> = self
            .eta
            .iter()
            .zip(&self.half_ln_m)
            .map(|(e, h)| (h - e * x).exp())
            .collect();
        DMatrix::from_fn(self.len(), self.len(), |i, j| {
            a[i] * a[j] * self.g_hat[(i, j)]
        })
    }

    fn check_range(&self, x: f64) -> Result<()> {
        if x < -X_LIMIT / self.eta[0] {
            return Err(Error::NumericalOverflow(format!(
                "x = {x} is below -{X_LIMIT}/eta_1"
            )));
        }
        Ok(())
    }

    fn scaled(&self, half_ln_m: &[f64], x: f64) -> Result<Scaled> {
        let n = self.len();
        let mut ln_scale = 0.0;
        let mut a = DVector::zeros(n);
        let mut inv_s2 = vec![1.0; n];
        for i in 0..n {
            let ln_a = half_ln_m[i] - self.eta[i] * x;
            if ln_a > 0.0 {
                ln_scale += ln_a;
                a[i] = 1.0;
                inv_s2[i] = (-2.0 * ln_a).exp();
            } else {
                a[i] = ln_a.exp();
            }
        }
        let b = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { inv_s2[i] } else { 0.0 };
            d + a[i] * a[j] * self.g_hat[(i, j)]
        });
        let chol = b.cholesky().ok_or_else(|| {
            Error::NumericalOverflow(format!("I + G(x) lost positive definiteness at x = {x}"))
        })?;
        Ok(Scaled { ln_scale, a, chol })
    }

    /// `L(x) = log det(I + G_s(x))`.
    pub fn log_det(&self, x: f64) -> Result<f64> {
        self.check_range(x)?;
        if self.use_dual(x) {
            let linear = self.ln_det_g0 - 2.0 * x * self.eta.iter().sum::<f64>();
            return Ok(self.raw_log_det(&self.dual_half_ln_m, -x)? + linear);
        }
        self.raw_log_det(&self.half_ln_m, x)
    }

    fn raw_log_det(&self, half_ln_m: &[f64], x: f64) -> Result<f64> {
        let sc = self.scaled(half_ln_m, x)?;
        let ln_det_b: f64 = sc
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
            * 2.0;
        Ok(2.0 * sc.ln_scale + ln_det_b)
    }

    /// `[L', L'', …, L⁽ᵏ⁾]` for `k ≤ 5`.
    pub fn log_det_derivatives(&self, x: f64, k: usize) -> Result<Vec<f64>> {
        assert!(
            k <= MAX_ORDER,
            "derivatives above order {MAX_ORDER} are not available"
        );
        self.check_range(x)?;
        if self.use_dual(x) {
            let mut d = self.raw_derivatives(&self.dual_half_ln_m, -x, k)?;
            for (i, v) in d.iter_mut().enumerate() {
                if i % 2 == 0 {
                    *v = -*v;
                }
            }
            if let Some(first) = d.first_mut() {
                *first -= 2.0 * self.eta.iter().sum::<f64>();
            }
            return Ok(d);
        }
        self.raw_derivatives(&self.half_ln_m, x, k)
    }

    fn raw_derivatives(&self, half_ln_m: &[f64], x: f64, k: usize) -> Result<Vec<f64>> {
        let sc = self.scaled(half_ln_m, x)?;
        let n = self.len();
        // v_j = Eʲ ã and y_k = B⁻¹ v_k
        let order = k.max(1) - 1;
        let vs: Vec<DVector<f64>> = (0..=order)
            .map(|j| DVector::from_fn(n, |i, _| self.eta[i].powi(j as i32) * sc.a[i]))
            .collect();
        let ys: Vec<DVector<f64>> = vs.iter().map(|v| sc.chol.solve(v)).collect();
        let s = |j: u8, k: u8| vs[j as usize].dot(&ys[k as usize]);
        let mut table = [[0.0; MAX_ORDER]; MAX_ORDER];
        for j in 0..=order {
            for l in j..=order {
                table[j][l] = s(j as u8, l as u8);
            }
        }
        Ok(derivative_polys()[..k]
            .iter()
            .map(|poly| {
                poly.iter()
                    .map(|(mono, coef)| {
                        coef * mono
                            .iter()
                            .map(|&(j, l)| table[j as usize][l as usize])
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect())
    }

    pub fn potential(&self, x: f64) -> Result<f64> {
        Ok(-2.0 * self.log_det_derivatives(x, 2)?[1])
    }

    pub fn evaluate(&self, x: f64) -> Result<PotentialJet> {
        let d = self.log_det_derivatives(x, 5)?;
        Ok(PotentialJet {
            u: -2.0 * d[1],
            u1: -2.0 * d[2],
            u2: -2.0 * d[3],
            u3: -2.0 * d[4],
        })
    }
}

/// `L(x) = log det(I + G_s(x))`.
pub fn log_det_term(s: &ScatteringData, x: f64) -> Result<f64> {
    GramEvaluator::new(s).log_det(x)
}

/// `(u, u', u'', u''')` of the reflectionless potential `u_s` at `x`.
pub fn evaluate(s: &ScatteringData, x: f64) -> Result<PotentialJet> {
    GramEvaluator::new(s).evaluate(x)
}
