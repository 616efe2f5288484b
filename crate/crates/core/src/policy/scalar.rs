//! Bounded one-dimensional minimization: grid seeding followed by Brent's
//! method (golden section with parabolic steps) inside the best bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a rate search optimizes at each level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    MaximizeDrift,
    MinimizeRemainingTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Number of coarse seed points over the search interval.
    pub grid_points: usize,
    /// Absolute tolerance on the argument.
    pub refine_tolerance: f64,
    pub objective: Objective,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_points: 64,
            refine_tolerance: 1e-10,
            objective: Objective::MinimizeRemainingTime,
        }
    }
}

impl OptimizerConfig {
    pub fn with_objective(self, objective: Objective) -> Self {
        Self { objective, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::Domain(format!("grid_points {} < 16", self.grid_points)));
        }
        if !(self.refine_tolerance > 0.0 && self.refine_tolerance <= 1e-6) {
            return Err(Error::Domain(format!(
                "refine_tolerance {} outside (0, 1e-6]",
                self.refine_tolerance
            )));
        }
        Ok(())
    }
}

const MAX_ITERATIONS: usize = 500;
const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Minimizes `objective` on `[lo, hi]` from a uniform seed grid.
pub fn minimize_scalar<F>(objective: F, lo: f64, hi: f64, cfg: &OptimizerConfig) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
    }
    cfg.validate()?;
    let g = cfg.grid_points;
    let grid: Vec<f64> = (0..g)
        .map(|i| if i + 1 == g { hi } else { lo + (hi - lo) * i as f64 / (g - 1) as f64 })
        .collect();
    minimize_on_grid(objective, &grid, cfg.refine_tolerance)
}

/// `points` log-spaced values from `lo` to `hi` (both included, `0 < lo < hi`).
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == points => hi,
            _ => (a + (b - a) * i as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

/// Evaluates `objective` on the sorted `grid`, then refines inside the
/// bracket around the best grid point. Returns the best point evaluated;
/// ties keep the smaller argument.
pub fn minimize_on_grid<F>(mut objective: F, grid: &[f64], tolerance: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if grid.is_empty() {
        return Err(Error::Domain("empty seed grid".into()));
    }
    let values: Vec<f64> = grid.iter().map(|&x| objective(x)).collect();
    let mut best_i = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best_i] {
            best_i = i;
        }
    }
    let mut best = (grid[best_i], values[best_i]);
    if grid.len() == 1 || !best.1.is_finite() {
        return Ok(best);
    }
    let a = grid[best_i.saturating_sub(1)];
    let b = grid[(best_i + 1).min(grid.len() - 1)];
    let refined = brent(&mut objective, a, b, best, tolerance)?;
    if refined.1 < best.1 || (refined.1 == best.1 && refined.0 < best.0) {
        best = refined;
    }
    Ok(polish(&mut objective, best, grid[0], grid[grid.len() - 1]))
}

/// Newton steps on a central-difference derivative. Function values are
/// flat to rounding within about `sqrt(eps)` of a smooth minimum, so
/// comparison-based search stalls there while the derivative still has a
/// clean zero. Steps are kept only while they do not worsen the value
/// beyond rounding.
fn polish<F>(f: &mut F, start: (f64, f64), lo: f64, hi: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (mut x, mut fx) = start;
    let h = f64::EPSILON.cbrt() * x.abs().max(1e-3);
    let slack = 8.0 * f64::EPSILON * fx.abs();
    for _ in 0..8 {
        if x - h < lo || x + h > hi || !fx.is_finite() {
            break;
        }
        let (up, down) = (f(x + h), f(x - h));
        let curvature = (up - 2.0 * fx + down) / (h * h);
        if !(curvature > 0.0) {
            break;
        }
        let step = -(up - down) / (2.0 * h) / curvature;
        if step.abs() > h {
            break;
        }
        let next = x + step;
        let f_next = f(next);
        if !(f_next <= fx + slack) || next == x {
            break;
        }
        let done = step.abs() <= 1e-13 * x.abs().max(1e-3);
        (x, fx) = (next, f_next);
        if done {
            break;
        }
    }
    (x, fx)
}

/// Brent's minimizer on `[a, b]` started from a known point `start`.
fn brent<F>(f: &mut F, mut a: f64, mut b: f64, start: (f64, f64), tolerance: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let (mut x, mut fx) = start;
    let (mut w, mut fw) = start;
    let (mut v, mut fv) = start;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut best = start;

    for _ in 0..MAX_ITERATIONS {
        let m = 0.5 * (a + b);
        let tol1 = 0.25 * tolerance + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(best);
        }

        let mut parabolic = false;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                parabolic = true;
            }
        }
        if !parabolic {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let u = u.clamp(a, b);
        let fu = f(u);
        if fu < best.1 || (fu == best.1 && u < best.0) {
            best = (u, fu);
        }

        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Err(Error::NonConvergence { level: None, iterations: MAX_ITERATIONS })
}
