//! Exact simulation of compound Ornstein–Uhlenbeck processes and Monte Carlo
//! estimation of `Φ_σ(x) = E exp(−½∫₀ˣ X(y)² dy)` and its derivatives.

mod engine;
mod sheet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, FiniteMeasure};

pub use engine::{grid_index, grid_steps, map_paths, path_rng, FactorSystem, PathScratch};
pub use sheet::{
    kernel_modulus, pair_kernel, CompoundOUSpec, KernelModulus, KernelPiece, Profile, RateWeight,
    SheetLayout,
};

fn default_n_paths() -> usize {
    100_000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t() -> f64 {
    3.0
}
fn default_seed() -> u64 {
    42
}
fn default_q_grid() -> usize {
    128
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_q_grid")]
    pub q_grid: usize,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            dt: default_dt(),
            t: default_t(),
            seed: default_seed(),
            q_grid: default_q_grid(),
        }
    }
}

impl MCConfig {
    fn validate(&self) -> Result<usize> {
        if self.n_paths < 2 {
            return Err(Error::InvalidInput("n_paths must be at least 2".into()));
        }
        if self.q_grid == 0 {
            return Err(Error::InvalidInput("q_grid must be positive".into()));
        }
        grid_steps(self.t, self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Pairwise sum in a fixed tree order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Sample mean and (n−1)-normalized standard deviation, two-pass.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if v.len() > 1 {
        pairwise_sum(&dev) / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn mean_estimate(v: &[f64], cfg: &MCConfig) -> MCEstimate {
    let (mean, sd) = mean_sd(v);
    MCEstimate {
        value: mean,
        stderr: sd / (v.len() as f64).sqrt(),
        n_paths: v.len(),
        seed: cfg.seed,
    }
}

/// Sampled paths on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub time_grid: Vec<f64>,
    /// `values[path][k]` for each component sum.
    pub values: Vec<Vec<f64>>,
    pub companion_values: Option<Vec<Vec<f64>>>,
    /// Per-component values when the ensemble has several components.
    pub components: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
    pub n_paths: usize,
}

impl PathEnsemble {
    /// Column of `values` at grid index `k`.
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|p| p[k]).collect()
    }

    pub fn component_at(&self, c: usize, k: usize) -> Vec<f64> {
        self.components[c].iter().map(|p| p[k]).collect()
    }
}

fn simulate_layout(
    layout: &SheetLayout,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    with_companion: bool,
) -> Result<PathEnsemble> {
    let steps = grid_steps(t, dt)?;
    let sys = FactorSystem::new(layout);
    let tr = sys.prepare(dt);
    let nc = sys.components();
    let rows = map_paths(n_paths, seed, |_, rng| {
        let mut scratch = PathScratch::default();
        let mut x = Vec::with_capacity(steps + 1);
        let mut xt = Vec::with_capacity(steps + 1);
        let mut parts = vec![Vec::with_capacity(steps + 1); if nc > 1 { nc } else { 0 }];
        sys.run_path(&tr, steps, rng, &mut scratch, |_, xs, cs| {
            x.push(xs.iter().sum::<f64>());
            if with_companion {
                xt.push(cs.iter().sum::<f64>());
            }
            for (part, v) in parts.iter_mut().zip(xs) {
                part.push(*v);
            }
        });
        (x, xt, parts)
    });
    let mut values = Vec::with_capacity(n_paths);
    let mut companion = Vec::with_capacity(if with_companion { n_paths } else { 0 });
    let mut components = vec![Vec::with_capacity(n_paths); if nc > 1 { nc } else { 0 }];
    for (x, xt, parts) in rows {
        values.push(x);
        if with_companion {
            companion.push(xt);
        }
        for (dst, src) in components.iter_mut().zip(parts) {
            dst.push(src);
        }
    }
    Ok(PathEnsemble {
        time_grid: (0..=steps).map(|k| k as f64 * dt).collect(),
        values,
        companion_values: with_companion.then_some(companion),
        components,
        seed,
        n_paths,
    })
}

/// `X = ⟨c, ξ⟩` with exact OU transitions; `X̃ = ⟨Dc, ξ⟩` from the same noise.
pub fn simulate_ou(
    sigma: &AtomicMeasure,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    with_companion: bool,
) -> Result<PathEnsemble> {
    let layout = SheetLayout::for_measure(&FiniteMeasure::from(sigma.clone()), 1)?;
    simulate_layout(&layout, t, dt, n_paths, seed, with_companion)
}

/// Wiener integral of `spec`'s kernel against the Brownian sheet.
pub fn simulate_sheet(
    spec: &CompoundOUSpec,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let layout = SheetLayout::new(vec![spec.clone()])?;
    simulate_layout(&layout, t, dt, n_paths, seed, true)
}

/// Several kernels against one sheet; `components[c]` holds each one.
pub fn simulate_layout_sheet(
    layout: &SheetLayout,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate_layout(layout, t, dt, n_paths, seed, true)
}

/// Per-path functionals at the requested grid indices.
struct PathRecord {
    weight: Vec<f64>,
    x: Vec<f64>,
    companion: Vec<f64>,
}

fn run_functionals(
    sigma: &FiniteMeasure,
    xs: &[f64],
    cfg: &MCConfig,
) -> Result<(Vec<usize>, Vec<PathRecord>)> {
    let total_steps = cfg.validate()?;
    if sigma.total_mass() == 0.0 {
        return Err(Error::InvalidMeasure("measure has zero mass".into()));
    }
    let idx: Vec<usize> = xs
        .iter()
        .map(|&x| {
            if x < 0.0 {
                return Err(Error::NegativeTime(x));
            }
            if x > cfg.t * (1.0 + 1e-12) {
                return Err(Error::BadGrid(format!("x = {x} exceeds T = {}", cfg.t)));
            }
            grid_index(x, cfg.dt)
        })
        .collect::<Result<_>>()?;
    let steps = idx.iter().copied().max().unwrap_or(0).min(total_steps);
    let layout = SheetLayout::for_measure(sigma, cfg.q_grid)?;
    let sys = FactorSystem::new(&layout);
    let tr = sys.prepare(cfg.dt);
    let half_dt = 0.5 * cfg.dt;
    let records = map_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let mut scratch = PathScratch::default();
        let mut rec = PathRecord {
            weight: vec![0.0; idx.len()],
            x: vec![0.0; idx.len()],
            companion: vec![0.0; idx.len()],
        };
        let mut integral = 0.0;
        let mut prev_sq = 0.0;
        sys.run_path(&tr, steps, rng, &mut scratch, |step, parts, comp| {
            let x: f64 = parts.iter().sum();
            let sq = x * x;
            if step > 0 {
                integral += half_dt * (prev_sq + sq);
            }
            prev_sq = sq;
            for (slot, &k) in idx.iter().enumerate() {
                if k == step {
                    rec.weight[slot] = (-0.5 * integral).exp();
                    rec.x[slot] = x;
                    rec.companion[slot] = comp.iter().sum();
                }
            }
        });
        rec
    });
    Ok((idx, records))
}

/// `log Φ_σ(x)` as the log of the path average, delta-method standard error.
pub fn estimate_log_phi(
    sigma: &FiniteMeasure,
    xs: &[f64],
    cfg: &MCConfig,
) -> Result<Vec<MCEstimate>> {
    let (idx, records) = run_functionals(sigma, xs, cfg)?;
    Ok(idx
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            if k == 0 {
                return MCEstimate {
                    value: 0.0,
                    stderr: 0.0,
                    n_paths: cfg.n_paths,
                    seed: cfg.seed,
                };
            }
            let w: Vec<f64> = records.iter().map(|r| r.weight[slot]).collect();
            let est = mean_estimate(&w, cfg);
            MCEstimate {
                value: est.value.ln(),
                stderr: est.stderr / est.value,
                ..est
            }
        })
        .collect())
}

/// `Φ′(x) = −½E[X(x)² w]` and `Φ″(x) = −¼E[(2S + 4X X̃ − X⁴) w]` with
/// `w = exp(−½∫₀ˣX²)`, from shared paths.
pub fn estimate_phi_derivatives(
    sigma: &FiniteMeasure,
    xs: &[f64],
    cfg: &MCConfig,
) -> Result<Vec<(MCEstimate, MCEstimate)>> {
    let (idx, records) = run_functionals(sigma, xs, cfg)?;
    let mass = sigma.total_mass();
    Ok(idx
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            if k == 0 {
                let exact = |value| MCEstimate {
                    value,
                    stderr: 0.0,
                    n_paths: cfg.n_paths,
                    seed: cfg.seed,
                };
                return (exact(0.0), exact(-0.5 * mass));
            }
            let d1: Vec<f64> = records
                .iter()
                .map(|r| -0.5 * r.x[slot] * r.x[slot] * r.weight[slot])
                .collect();
            let d2: Vec<f64> = records
                .iter()
                .map(|r| {
                    let (x, xt) = (r.x[slot], r.companion[slot]);
                    -0.25 * (2.0 * mass + 4.0 * x * xt - x.powi(4)) * r.weight[slot]
                })
                .collect();
            (mean_estimate(&d1, cfg), mean_estimate(&d2, cfg))
        })
        .collect())
}

/// `log Φ` on the negative axis through `∫ₓ⁰ X_σ² = ∫₀^{−x} X_σ̃²`.
pub fn estimate_log_phi_negative(
    sigma: &AtomicMeasure,
    xs: &[f64],
    cfg: &MCConfig,
) -> Result<Vec<MCEstimate>> {
    if let Some(&x) = xs.iter().find(|&&x| x > 0.0) {
        return Err(Error::InvalidInput(format!(
            "negative-axis estimate needs x <= 0, got {x}"
        )));
    }
    let flipped: Vec<f64> = xs.iter().map(|x| -x).collect();
    estimate_log_phi(&FiniteMeasure::from(sigma.reflect()), &flipped, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub y: f64,
    pub m: u32,
    /// `(2m)! / (2^m m!)`
    pub coefficient: f64,
    pub variance: f64,
    pub expected: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub z: f64,
    /// Exact kernel error of the approximant at `y` (zero for atomic specs).
    pub kernel_error: f64,
    pub increment_s: f64,
    pub increment_exact: f64,
    pub increment_empirical: f64,
    pub increment_stderr: f64,
    pub increment_z: f64,
    pub modulus_bound: f64,
}

pub fn gaussian_coefficient(m: u32) -> f64 {
    // (2m)!/(2^m m!) = (2m − 1)!!
    (1..=m).map(|k| (2 * k - 1) as f64).product()
}

/// Compares `E[X(y)^{2m}]` with `(2m)!/(2^m m!) Var^m` and
/// `E|X(y) − X(y/2)|²` with the exact kernel-difference norm.
pub fn gaussian_moment_check(
    spec: &CompoundOUSpec,
    y: f64,
    m: u32,
    cfg: &MCConfig,
) -> Result<MomentReport> {
    if !(1..=4).contains(&m) {
        return Err(Error::InvalidInput(format!(
            "moment order m must be in 1..=4, got {m}"
        )));
    }
    if !(y > 0.0) {
        return Err(Error::InvalidInput(format!("need y > 0, got {y}")));
    }
    if cfg.n_paths < 2 {
        return Err(Error::InvalidInput("n_paths must be at least 2".into()));
    }
    // exact transitions: two steps reach y/2 and y
    let half = 0.5 * y;
    let layout = SheetLayout::new(vec![spec.clone()])?;
    let sys = FactorSystem::new(&layout);
    let tr = sys.prepare(half);
    let samples = map_paths(cfg.n_paths, cfg.seed, |_, rng| {
        let mut scratch = PathScratch::default();
        let mut out = [0.0; 2];
        sys.run_path(&tr, 2, rng, &mut scratch, |step, xs, _| {
            if step > 0 {
                out[step - 1] = xs[0];
            }
        });
        out
    });
    let variance = spec.covariance(y, y);
    let coefficient = gaussian_coefficient(m);
    let expected = coefficient * variance.powi(m as i32);
    let powers: Vec<f64> = samples.iter().map(|s| s[1].powi(2 * m as i32)).collect();
    let moment = mean_estimate(&powers, cfg);
    let incr: Vec<f64> = samples.iter().map(|s| (s[1] - s[0]).powi(2)).collect();
    let inc = mean_estimate(&incr, cfg);
    let increment_exact = variance + spec.covariance(half, half) - 2.0 * spec.covariance(half, y);
    let z = |emp: f64, exact: f64, se: f64| if se > 0.0 { (emp - exact) / se } else { 0.0 };
    Ok(MomentReport {
        y,
        m,
        coefficient,
        variance,
        expected,
        empirical: moment.value,
        stderr: moment.stderr,
        z: z(moment.value, expected, moment.stderr),
        kernel_error: spec.kernel_error(y),
        increment_s: half,
        increment_exact,
        increment_empirical: inc.value,
        increment_stderr: inc.stderr,
        increment_z: z(inc.value, increment_exact, inc.stderr),
        modulus_bound: spec.kernel_modulus(y).k * half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{normalize_h, Atom};

    fn measure(v: &[(f64, f64)]) -> AtomicMeasure {
        normalize_h(&v.iter().map(|&(p, c)| Atom::new(p, c)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn coefficients() {
        assert_eq!(gaussian_coefficient(1), 1.0);
        assert_eq!(gaussian_coefficient(2), 3.0);
        assert_eq!(gaussian_coefficient(3), 15.0);
        assert_eq!(gaussian_coefficient(4), 105.0);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: MCConfig = serde_json::from_str(r#"{"n_paths":1000,"seed":7}"#).unwrap();
        assert_eq!(cfg.n_paths, 1000);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.t, 3.0);
        assert_eq!(cfg.q_grid, 128);
        let full: MCConfig =
            serde_json::from_str(r#"{"n_paths":100000,"dt":0.001,"T":3.0,"seed":42,"q_grid":128}"#)
                .unwrap();
        assert_eq!(full, MCConfig::default());
    }

    #[test]
    fn origin_values_are_exact() {
        let sigma = FiniteMeasure::from(measure(&[(0.6, 0.64)]));
        let cfg = MCConfig {
            n_paths: 100,
            dt: 0.01,
            t: 1.0,
            ..MCConfig::default()
        };
        let lp = estimate_log_phi(&sigma, &[0.0], &cfg).unwrap();
        assert_eq!((lp[0].value, lp[0].stderr), (0.0, 0.0));
        let d = estimate_phi_derivatives(&sigma, &[0.0], &cfg).unwrap();
        assert_eq!((d[0].0.value, d[0].0.stderr), (0.0, 0.0));
        assert_eq!((d[0].1.value, d[0].1.stderr), (-0.32, 0.0));
        let neg = estimate_log_phi_negative(sigma.atomic(), &[0.0], &cfg).unwrap();
        assert_eq!(neg[0].value, 0.0);
    }

    #[test]
    fn paths_start_at_zero_and_grid_is_checked() {
        let sigma = measure(&[(1.0, 1.0), (-0.5, 0.3)]);
        let ens = simulate_ou(&sigma, 1.0, 0.25, 50, 3, true).unwrap();
        assert_eq!(ens.time_grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(ens.values.iter().all(|p| p[0] == 0.0));
        assert!(ens
            .companion_values
            .as_ref()
            .unwrap()
            .iter()
            .all(|p| p[0] == 0.0));
        assert!(matches!(
            simulate_ou(&sigma, 1.0, 0.3, 5, 3, false),
            Err(Error::BadGrid(_))
        ));
    }

    #[test]
    fn log_phi_is_pathwise_nonincreasing() {
        let sigma = FiniteMeasure::from(measure(&[(0.3, 0.5), (-1.0, 0.7)]));
        let cfg = MCConfig {
            n_paths: 500,
            dt: 0.01,
            t: 2.0,
            ..MCConfig::default()
        };
        let est = estimate_log_phi(&sigma, &[0.0, 0.5, 1.0, 1.5, 2.0], &cfg).unwrap();
        assert!(est.windows(2).all(|w| w[1].value <= w[0].value));
    }

    #[test]
    fn pairwise_statistics() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let (m, sd) = mean_sd(&v);
        assert_eq!(m, 499.5);
        assert!((sd - (1000.0f64 * 1001.0 / 12.0).sqrt()).abs() < 1e-9);
    }
}
