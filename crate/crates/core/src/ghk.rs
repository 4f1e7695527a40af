//! Multivariate-normal rectangle probabilities by the GHK recursion, and the
//! choice probabilities built on it.
//!
//! Alternatives are indexed from 0 throughout the library.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats_core::{cholesky, quantile_unchecked, std_normal_cdf, Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhkConfig {
    pub num_draws: usize,
    pub antithetic: bool,
    pub master_seed: u64,
}

impl Default for GhkConfig {
    fn default() -> Self {
        Self { num_draws: 250, antithetic: true, master_seed: 0 }
    }
}

impl GhkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_draws == 0 {
            return Err(Error::Config("ghk num_draws must be at least 1".into()));
        }
        Ok(())
    }

    /// Stream for observation `obs`; the same stream serves every θ (common random numbers).
    pub fn stream_for(&self, obs: u64) -> RngStream {
        RngStream::new(self.master_seed, obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// V_j for each alternative.
    pub systematic: Vec<f64>,
    pub chosen: usize,
    pub error_cov: Matrix,
}

impl UtilitySpec {
    pub fn new(systematic: Vec<f64>, chosen: usize, error_cov: Matrix) -> Result<Self> {
        let s = Self { systematic, chosen, error_cov };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.systematic.len();
        if j < 2 {
            return Err(Error::Shape("need at least two alternatives".into()));
        }
        if self.chosen >= j {
            return Err(Error::Shape(format!("chosen index {} outside 0..{j}", self.chosen)));
        }
        if self.error_cov.rows() != j || self.error_cov.cols() != j {
            return Err(Error::Shape(format!(
                "error covariance is {}x{}, expected {j}x{j}",
                self.error_cov.rows(),
                self.error_cov.cols()
            )));
        }
        if self.error_cov.diagonal().iter().any(|&d| d != 1.0) {
            return Err(Error::Domain("error covariance must have unit diagonal".into()));
        }
        Ok(())
    }
}

/// Covariance of (u_k − u_c) for k ≠ c, in ascending k.
pub fn differenced_covariance(sigma: &Matrix, chosen: usize) -> Matrix {
    let idx: Vec<usize> = (0..sigma.rows()).filter(|&k| k != chosen).collect();
    let c = chosen;
    Matrix::from_fn(idx.len(), idx.len(), |a, b| {
        let (k, l) = (idx[a], idx[b]);
        sigma[(k, l)] - sigma[(k, c)] - sigma[(c, l)] + sigma[(c, c)]
    })
}

/// Estimate and Monte Carlo standard error of P(L·η ≤ b), η ~ N(0, I).
pub fn ghk_rectangle_estimate(
    bounds_upper: &[f64],
    chol: &Matrix,
    cfg: &GhkConfig,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    check_chol(bounds_upper, chol)?;
    cfg.validate()?;
    let d = bounds_upper.len();
    let r = cfg.num_draws;
    let mut eta = vec![0.0; d];
    let (mut s1, mut s2) = (0.0, 0.0);
    // With antithetic pairs the pair means are the independent units.
    let mut pair = 0.0;
    let mut units = 0usize;
    let (mut u1, mut u2) = (0.0, 0.0);
    for rep in 0..r {
        let p = ghk_replicate(bounds_upper, chol, cfg, stream, rep, &mut eta);
        s1 += p;
        s2 += p * p;
        if cfg.antithetic {
            pair += p;
            if rep % 2 == 1 || rep + 1 == r {
                let m = if rep % 2 == 1 { pair / 2.0 } else { pair };
                u1 += m;
                u2 += m * m;
                units += 1;
                pair = 0.0;
            }
        }
    }
    let mean = s1 / r as f64;
    let se = if cfg.antithetic {
        let n = units as f64;
        let m = u1 / n;
        if units > 1 { ((u2 / n - m * m).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 }
    } else {
        let n = r as f64;
        if r > 1 { ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 }
    };
    Ok((mean.clamp(0.0, 1.0), se))
}

/// GHK simulator of P(L·η ≤ b).
pub fn ghk_rectangle_prob(
    bounds_upper: &[f64],
    chol: &Matrix,
    cfg: &GhkConfig,
    stream: &RngStream,
) -> Result<f64> {
    check_chol(bounds_upper, chol)?;
    cfg.validate()?;
    Ok(ghk_mean(bounds_upper, chol, cfg, stream))
}

fn check_chol(bounds: &[f64], chol: &Matrix) -> Result<()> {
    if chol.rows() != bounds.len() || chol.cols() != bounds.len() {
        return Err(Error::Shape(format!(
            "{} bounds against a {}x{} factor",
            bounds.len(),
            chol.rows(),
            chol.cols()
        )));
    }
    if !chol.is_lower_triangular() || chol.diagonal().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("factor must be lower triangular with positive diagonal".into()));
    }
    Ok(())
}

fn ghk_mean(bounds: &[f64], chol: &Matrix, cfg: &GhkConfig, stream: &RngStream) -> f64 {
    let mut eta = vec![0.0; bounds.len()];
    let mut acc = 0.0;
    for rep in 0..cfg.num_draws {
        acc += ghk_replicate(bounds, chol, cfg, stream, rep, &mut eta);
    }
    (acc / cfg.num_draws as f64).clamp(0.0, 1.0)
}

#[inline]
fn ghk_replicate(
    bounds: &[f64],
    chol: &Matrix,
    cfg: &GhkConfig,
    stream: &RngStream,
    rep: usize,
    eta: &mut [f64],
) -> f64 {
    let d = bounds.len();
    let (base, flip) = if cfg.antithetic { (rep / 2, rep % 2 == 1) } else { (rep, false) };
    let mut prod = 1.0;
    for t in 0..d {
        let row = chol.row(t);
        let mut s = bounds[t];
        for k in 0..t {
            s -= row[k] * eta[k];
        }
        let p = std_normal_cdf(s / row[t]);
        prod *= p;
        if prod == 0.0 {
            return 0.0;
        }
        if t + 1 < d {
            let mut u = stream.uniform((base * d + t) as u64);
            if flip {
                u = 1.0 - u;
            }
            eta[t] = quantile_unchecked((u * p).max(f64::MIN_POSITIVE));
        }
    }
    prod
}

/// Choice-probability engine with the differenced Cholesky factors cached per chosen alternative.
#[derive(Debug, Clone)]
pub struct MnpKernel {
    sigma: Matrix,
    factors: Vec<Matrix>,
}

impl MnpKernel {
    pub fn new(sigma: &Matrix) -> Result<Self> {
        let j = sigma.rows();
        if j < 2 || !sigma.is_square() {
            return Err(Error::Shape("need a square covariance with at least two alternatives".into()));
        }
        let factors = (0..j)
            .map(|c| cholesky(&differenced_covariance(sigma, c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sigma: sigma.clone(), factors })
    }

    /// Exchangeable Σ_u with unit diagonal and off-diagonal `a`.
    pub fn exchangeable(j: usize, a: f64) -> Result<Self> {
        let lo = -1.0 / (j as f64 - 1.0);
        if !(a > lo && a < 1.0) {
            return Err(Error::Config(format!(
                "exchangeable correlation {a} outside ({lo}, 1) for {j} alternatives"
            )));
        }
        Self::new(&Matrix::exchangeable(j, a))
    }

    pub fn alternatives(&self) -> usize {
        self.sigma.rows()
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// GHK estimate of P(I = chosen | V).
    pub fn prob(&self, v: &[f64], chosen: usize, cfg: &GhkConfig, stream: &RngStream) -> f64 {
        let chol = &self.factors[chosen];
        let b: Vec<f64> = (0..v.len()).filter(|&k| k != chosen).map(|k| v[chosen] - v[k]).collect();
        ghk_mean(&b, chol, cfg, stream)
    }
}

/// GHK estimate of the multinomial-probit probability of `spec.chosen`.
pub fn mnp_choice_prob(spec: &UtilitySpec, cfg: &GhkConfig, stream: &RngStream) -> Result<f64> {
    spec.validate()?;
    cfg.validate()?;
    let chol = cholesky(&differenced_covariance(&spec.error_cov, spec.chosen))?;
    let v = &spec.systematic;
    let b: Vec<f64> = (0..v.len())
        .filter(|&k| k != spec.chosen)
        .map(|k| v[spec.chosen] - v[k])
        .collect();
    Ok(ghk_mean(&b, &chol, cfg, stream))
}

/// Multinomial-logit probability of `spec.chosen`; the covariance is ignored.
pub fn mnl_choice_prob(spec: &UtilitySpec) -> f64 {
    softmax(&spec.systematic)[spec.chosen]
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats_core::{bivariate_normal_cdf, std_normal_cdf};

    fn cfg(r: usize) -> GhkConfig {
        GhkConfig { num_draws: r, antithetic: true, master_seed: 11 }
    }

    #[test]
    fn one_dimension_is_exact() {
        let l = Matrix::identity(1);
        for b in [-2.0, 0.0, 0.7] {
            let p = ghk_rectangle_prob(&[b], &l, &cfg(3), &RngStream::new(1, 1)).unwrap();
            assert_eq!(p, std_normal_cdf(b));
        }
    }

    #[test]
    fn independence_factorizes() {
        let l = Matrix::identity(2);
        let c = GhkConfig { num_draws: 100_000, antithetic: false, master_seed: 3 };
        let (p, se) = ghk_rectangle_estimate(&[0.3, -0.4], &l, &c, &RngStream::new(3, 0)).unwrap();
        let want = std_normal_cdf(0.3) * std_normal_cdf(-0.4);
        assert!((p - want).abs() <= 3.0 * se.max(1e-12), "{p} vs {want} (se {se})");
    }

    #[test]
    fn two_dimensions_match_bivariate_cdf() {
        let s = Matrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        let (p, se) =
            ghk_rectangle_estimate(&[0.2, 1.1], &l, &cfg(20_000), &RngStream::new(5, 2)).unwrap();
        let want = bivariate_normal_cdf(0.2, 1.1, 0.6).unwrap();
        assert!((p - want).abs() < 4.0 * se + 1e-6, "{p} vs {want}");
    }

    #[test]
    fn shape_errors() {
        let l = Matrix::identity(2);
        assert!(matches!(
            ghk_rectangle_prob(&[0.0], &l, &cfg(10), &RngStream::new(0, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn binary_probit_reduction() {
        for a in [0.0, 0.4, -0.5] {
            let spec = UtilitySpec::new(vec![0.8, -0.3], 0, Matrix::exchangeable(2, a)).unwrap();
            let p = mnp_choice_prob(&spec, &cfg(5), &RngStream::new(0, 9)).unwrap();
            let want = std_normal_cdf(1.1 / (2.0 - 2.0 * a).sqrt());
            assert!((p - want).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_and_total_probability() {
        let j = 4;
        let sigma = Matrix::exchangeable(j, 0.3);
        let k = MnpKernel::new(&sigma).unwrap();
        let c = cfg(10_000);
        let stream = RngStream::new(2, 4);
        let v = [0.4, -0.2, 0.1, 0.0];
        let total: f64 = (0..j).map(|ch| k.prob(&v, ch, &c, &stream)).sum();
        assert!((total - 1.0).abs() < 0.01, "{total}");
        let eq = k.prob(&[0.5; 4], 2, &c, &stream);
        assert!((eq - 0.25).abs() < 0.01, "{eq}");
    }

    #[test]
    fn kernel_matches_free_function_and_is_shift_invariant() {
        let sigma = Matrix::exchangeable(3, 0.2);
        let k = MnpKernel::new(&sigma).unwrap();
        let c = cfg(250);
        let s = RngStream::new(8, 17);
        let v = vec![0.3, 1.0, -0.5];
        let spec = UtilitySpec::new(v.clone(), 1, sigma).unwrap();
        let a = k.prob(&v, 1, &c, &s);
        assert_eq!(a.to_bits(), mnp_choice_prob(&spec, &c, &s).unwrap().to_bits());
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.0).collect();
        assert!((k.prob(&shifted, 1, &c, &s) - a).abs() < 1e-12);
        assert_eq!(a.to_bits(), k.prob(&v, 1, &c, &s).to_bits());
    }

    #[test]
    fn mnl_examples() {
        let id = Matrix::identity(3);
        let p = mnl_choice_prob(&UtilitySpec::new(vec![1.0, 0.0, 0.0], 0, id.clone()).unwrap());
        assert!((p - 0.576117).abs() < 1e-6);
        let p = mnl_choice_prob(&UtilitySpec::new(vec![2.0; 3], 1, id).unwrap());
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        let p = mnl_choice_prob(
            &UtilitySpec::new(vec![1.0, 0.0], 0, Matrix::identity(2)).unwrap(),
        );
        assert!((p - 0.731059).abs() < 1e-6);
        assert!((softmax(&[1000.0, 0.0])[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn se_shrinks_with_draws() {
        let sigma = Matrix::exchangeable(4, 0.5);
        let l = cholesky(&differenced_covariance(&sigma, 0)).unwrap();
        let b = [0.2, -0.1, 0.4];
        let sd = |r: usize| {
            let c = GhkConfig { num_draws: r, antithetic: false, master_seed: 0 };
            let xs: Vec<f64> = (0..100)
                .map(|s| ghk_rectangle_prob(&b, &l, &c, &RngStream::new(s, 0)).unwrap())
                .collect();
            let m = xs.iter().sum::<f64>() / 100.0;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 99.0).sqrt()
        };
        let ratio = sd(400) / sd(100);
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    }
}
