//! Quasi-Newton maximizer used by the choice and joint fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iter: usize,
    /// Bound on the relative gradient max_k |g_k|·max(|θ_k|,1) / max(|f|,1).
    pub grad_tol: f64,
    /// Central-difference step is `fd_step·(1 + |θ_k|)`.
    pub fd_step: f64,
    /// Largest allowed change of any coordinate in one iteration.
    pub max_step: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-5, fd_step: 1e-5, max_step: 2.0 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.grad_tol > 0.0 && self.fd_step > 0.0 && self.max_step > 0.0) || self.max_iter == 0 {
            return Err(crate::Error::Config("optimizer tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn relative_gradient(g: &[f64], x: &[f64], f: f64) -> f64 {
    let scale = f.abs().max(1.0);
    g.iter().zip(x).map(|(gk, xk)| gk.abs() * xk.abs().max(1.0)).fold(0.0, f64::max) / scale
}

/// Central differences with step `h·(1 + |x_k|)`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xx = x.to_vec();
    (0..x.len())
        .map(|k| {
            let step = h * (1.0 + x[k].abs());
            xx[k] = x[k] + step;
            let up = f(&xx);
            xx[k] = x[k] - step;
            let dn = f(&xx);
            xx[k] = x[k];
            (up - dn) / (2.0 * step)
        })
        .collect()
}

/// BFGS ascent with Armijo backtracking.
///
/// `fg` returns the objective and its gradient at a point. Non-finite
/// objective values are treated as infeasible and shrink the step.
pub fn maximize<F>(mut fg: F, x0: &[f64], cfg: &OptimConfig) -> OptimResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    let mut evals = 1;
    // Inverse Hessian approximation of −f.
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut rel = relative_gradient(&g, &x, f);
    while iterations < cfg.max_iter && !(rel < cfg.grad_tol) && f.is_finite() {
        let mut dir: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * g[j]).sum()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !(slope > 0.0) {
            h = identity(n);
            fresh = true;
            dir = g.clone();
            slope = g.iter().map(|v| v * v).sum();
        }
        let biggest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut t = if biggest > cfg.max_step { cfg.max_step / biggest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + t * d).collect();
            let (fnew, gnew) = fg(&xn);
            evals += 1;
            if fnew.is_finite() && fnew >= f + 1e-4 * t * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((xn, fnew, gnew)) = accepted else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y is the change in the gradient of −f.
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                h = identity(n);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = xn;
        f = fnew;
        g = gnew;
        rel = relative_gradient(&g, &x, f);
    }
    OptimResult {
        converged: rel < cfg.grad_tol && f.is_finite(),
        gradient_norm: rel,
        x,
        f,
        grad: g,
        iterations,
        evaluations: evals,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
