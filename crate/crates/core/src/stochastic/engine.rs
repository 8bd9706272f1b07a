//! Exact path simulation on a cell decomposition of the sheet.
//!
//! The `q` axis is cut at every strip boundary of every component. Each cell
//! carries an independent Brownian motion `B_cell` (its sheet increment
//! divided by `√width`) and one OU factor `ζ_r(y) = ∫_0^y e^{r(y−z)} dB_cell`
//! per distinct rate on the cell. Factors on one cell share noise, so their
//! transitions are drawn jointly from the exact covariance
//! `(e^{(r+s)Δ} − 1)/(r + s)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::sheet::SheetLayout;
use crate::error::{Error, Result};

/// RNG for one path: the stream index is the path index.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Debug, Clone)]
struct Term {
    rate: usize,
    component: usize,
    x: f64,
    companion: f64,
}

#[derive(Debug, Clone)]
struct Cell {
    rates: Vec<f64>,
    terms: Vec<Term>,
}

#[derive(Debug, Clone)]
pub struct FactorSystem {
    cells: Vec<Cell>,
    components: usize,
}

impl FactorSystem {
    pub fn new(layout: &SheetLayout) -> Self {
        let mut cuts: Vec<f64> = layout
            .components
            .iter()
            .flat_map(|c| c.strip_bounds())
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pieces: Vec<Vec<_>> = layout.components.iter().map(|c| c.pieces()).collect();
        let mut cells = Vec::new();
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let width = hi - lo;
            let mut cell = Cell {
                rates: Vec::new(),
                terms: Vec::new(),
            };
            for (component, list) in pieces.iter().enumerate() {
                let start = list.partition_point(|p| p.hi <= lo);
                for p in list[start..].iter().take_while(|p| p.lo < hi) {
                    if p.lo <= lo && p.hi >= hi {
                        let rate = match cell.rates.iter().position(|&r| r == p.rate) {
                            Some(i) => i,
                            None => {
                                cell.rates.push(p.rate);
                                cell.rates.len() - 1
                            }
                        };
                        cell.terms.push(Term {
                            rate,
                            component,
                            x: p.coef * width.sqrt(),
                            companion: p.companion * width.sqrt(),
                        });
                    }
                }
            }
            if !cell.terms.is_empty() {
                cells.push(cell);
            }
        }
        Self {
            cells,
            components: layout.components.len(),
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn factor_count(&self) -> usize {
        self.cells.iter().map(|c| c.rates.len()).sum()
    }

    pub fn prepare(&self, dt: f64) -> Transitions {
        let mut decay = Vec::new();
        let mut noise = Vec::new();
        let mut offsets = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let k = cell.rates.len();
            offsets.push(noise.len());
            decay.extend(cell.rates.iter().map(|r| (r * dt).exp()));
            let cov = DMatrix::from_fn(k, k, |i, j| {
                let s = cell.rates[i] + cell.rates[j];
                if (s * dt).abs() < 1e-8 {
                    dt * (1.0 + 0.5 * s * dt)
                } else {
                    (s * dt).exp_m1() / s
                }
            });
            let factor = if k == 1 {
                DMatrix::from_element(1, 1, cov[(0, 0)].sqrt())
            } else {
                let eig = SymmetricEigen::new(cov);
                let mut v = eig.eigenvectors;
                for (j, lambda) in eig.eigenvalues.iter().enumerate() {
                    let s = lambda.max(0.0).sqrt();
                    v.column_mut(j).scale_mut(s);
                }
                v
            };
            noise.extend(factor.iter().copied());
        }
        Transitions {
            decay,
            noise,
            offsets,
        }
    }

    /// Runs one path for `steps` steps, calling `visit(step, x, x_companion)`
    /// after every step (and at step 0), per component.
    pub fn run_path<R: Rng, F: FnMut(usize, &[f64], &[f64])>(
        &self,
        tr: &Transitions,
        steps: usize,
        rng: &mut R,
        scratch: &mut PathScratch,
        mut visit: F,
    ) {
        scratch.reset(self);
        visit(0, &scratch.x, &scratch.companion);
        for step in 1..=steps {
            scratch.x.iter_mut().for_each(|v| *v = 0.0);
            scratch.companion.iter_mut().for_each(|v| *v = 0.0);
            let mut base = 0;
            for (ci, cell) in self.cells.iter().enumerate() {
                let k = cell.rates.len();
                let zeta = &mut scratch.zeta[base..base + k];
                if k == 1 {
                    let z: f64 = rng.sample(StandardNormal);
                    zeta[0] = tr.decay[base] * zeta[0] + tr.noise[tr.offsets[ci]] * z;
                } else {
                    let draws = &mut scratch.draws[..k];
                    for d in draws.iter_mut() {
                        *d = rng.sample(StandardNormal);
                    }
                    let m = &tr.noise[tr.offsets[ci]..tr.offsets[ci] + k * k];
                    for i in 0..k {
                        // column-major k×k factor
                        let eps: f64 = (0..k).map(|j| m[i + j * k] * draws[j]).sum();
                        zeta[i] = tr.decay[base + i] * zeta[i] + eps;
                    }
                }
                for t in &cell.terms {
                    scratch.x[t.component] += t.x * zeta[t.rate];
                    scratch.companion[t.component] += t.companion * zeta[t.rate];
                }
                base += k;
            }
            visit(step, &scratch.x, &scratch.companion);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transitions {
    decay: Vec<f64>,
    noise: Vec<f64>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct PathScratch {
    zeta: Vec<f64>,
    draws: Vec<f64>,
    x: Vec<f64>,
    companion: Vec<f64>,
}

impl PathScratch {
    fn reset(&mut self, sys: &FactorSystem) {
        self.zeta.clear();
        self.zeta.resize(sys.factor_count(), 0.0);
        let widest = sys.cells.iter().map(|c| c.rates.len()).max().unwrap_or(0);
        self.draws.resize(widest, 0.0);
        self.x.clear();
        self.x.resize(sys.components, 0.0);
        self.companion.clear();
        self.companion.resize(sys.components, 0.0);
    }
}

/// Number of steps of size `dt` in `t`; `BadGrid` unless `dt` divides `t`.
pub fn grid_steps(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t >= 0.0 && t.is_finite()) {
        return Err(Error::BadGrid(format!(
            "need dt > 0 and T >= 0, got dt = {dt}, T = {t}"
        )));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::BadGrid(format!("dt = {dt} does not divide T = {t}")));
    }
    Ok(n as usize)
}

/// Index of `x` on the `dt` grid.
pub fn grid_index(x: f64, dt: f64) -> Result<usize> {
    let n = (x / dt).round();
    if x < 0.0 || (n * dt - x).abs() > 1e-9 * dt.max(x) {
        return Err(Error::BadGrid(format!(
            "x = {x} is not a point of the dt = {dt} grid"
        )));
    }
    Ok(n as usize)
}

/// `f(path_index, rng)` for every path, in path order. Each path owns its
/// RNG stream, so the output does not depend on the thread count.
pub fn map_paths<T, F>(n_paths: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::sheet::{CompoundOUSpec, RateWeight};

    #[test]
    fn grid_checks() {
        assert_eq!(grid_steps(3.0, 1e-3).unwrap(), 3000);
        assert!(matches!(grid_steps(1.0, 0.3), Err(Error::BadGrid(_))));
        assert_eq!(grid_index(0.5, 1e-3).unwrap(), 500);
        assert!(grid_index(0.5005, 1e-3).is_err());
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: f64 = path_rng(7, 0).sample(StandardNormal);
        let b: f64 = path_rng(7, 1).sample(StandardNormal);
        let c: f64 = path_rng(7, 0).sample(StandardNormal);
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn overlapping_strips_share_cells() {
        // two components over the same q range with different rates
        let s1 = CompoundOUSpec::atomic(1.0, -1.0, vec![RateWeight { p: 0.5, d: 1.0 }]).unwrap();
        let s2 = CompoundOUSpec::atomic(1.5, -1.0, vec![RateWeight { p: -0.5, d: 1.0 }]).unwrap();
        let layout = SheetLayout::new(vec![s1, s2]).unwrap();
        let sys = FactorSystem::new(&layout);
        assert!(!layout.is_disjoint());
        assert_eq!(sys.cells.len(), 3);
        assert_eq!(sys.cells[1].rates.len(), 2);
        assert!(layout.covariance(&[0], &[1], 1.0, 1.0) > 0.0);
    }
}
