//! Gaussian-copula joint likelihood of the binary outcome and the choice.
//!
//! Outcome: m = 1(x·γ + τ_I + ε > 0), ε ~ N(0,1), no intercept. The copula
//! couples ε with Φ⁻¹(F₂) of the chosen alternative through ρ_j, so
//! P(m = 0, I = j) = B(−(xγ + τ_j), Φ⁻¹(F₂), ρ_j), evaluated by quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice_model::{ChoiceEngine, ChoiceParams, PROB_FLOOR};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::inference::opg_covariance;
use crate::optim::{central_gradient, maximize, OptimConfig};
use crate::stats_core::{dot, quantile_unchecked, std_normal_cdf, std_normal_pdf, Matrix, QuadratureRule, RngStream};

/// Default Gauss–Legendre order of the ε integral.
pub const DEFAULT_QUADRATURE_ORDER: usize = 40;
const EPS_LIMIT: f64 = 8.0;

/// ρ = 2/(1 + e^raw) − 1.
pub fn rho_transform(raw: f64) -> f64 {
    -(0.5 * raw).tanh()
}

pub fn rho_transform_inverse(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("correlation {rho} outside (-1, 1)")));
    }
    Ok(((1.0 - rho) / (1.0 + rho)).ln())
}

/// dρ/draw.
pub fn rho_transform_derivative(raw: f64) -> f64 {
    let s = 1.0 / (0.5 * raw).cosh();
    -0.5 * s * s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    TwoStep,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
    pub rho_raw: Vec<f64>,
    pub beta: ChoiceParams,
    pub beta_estimated: bool,
}

impl JointParams {
    pub fn new(gamma: Vec<f64>, tau: Vec<f64>, rho: &[f64], beta: ChoiceParams) -> Result<Self> {
        let rho_raw = rho.iter().map(|&r| rho_transform_inverse(r)).collect::<Result<_>>()?;
        Ok(Self { gamma, tau, rho_raw, beta, beta_estimated: false })
    }

    pub fn zeros(x_cols: usize, beta: ChoiceParams) -> Self {
        let j = beta.alternatives();
        Self { gamma: vec![0.0; x_cols], tau: vec![0.0; j], rho_raw: vec![0.0; j], beta, beta_estimated: false }
    }

    pub fn rho(&self) -> Vec<f64> {
        self.rho_raw.iter().map(|&r| rho_transform(r)).collect()
    }

    fn outcome_theta(&self) -> Vec<f64> {
        let mut t = self.gamma.clone();
        t.extend_from_slice(&self.tau);
        t.extend_from_slice(&self.rho_raw);
        t
    }

    fn with_outcome_theta(&self, t: &[f64]) -> Self {
        let kx = self.gamma.len();
        let j = self.tau.len();
        Self {
            gamma: t[..kx].to_vec(),
            tau: t[kx..kx + j].to_vec(),
            rho_raw: t[kx + j..kx + 2 * j].to_vec(),
            ..self.clone()
        }
    }
}

/// P(ε ≤ c, Z ≤ d) with Corr(ε, Z) = ρ, c = −index, d = Φ⁻¹(f2).
///
/// The shorter side of the ε line is integrated and the other side follows
/// from P(Z ≤ d) = f2; the interval is split where Φ((d − ρε)/√(1−ρ²)) switches.
fn p0_core(index: f64, f2: f64, rho: f64, rule: &QuadratureRule) -> f64 {
    let c = -index;
    if c <= -EPS_LIMIT {
        return 0.0;
    }
    let d = quantile_unchecked(f2);
    let s = (1.0 - rho * rho).sqrt();
    let g = |e: f64| std_normal_pdf(e) * std_normal_cdf((d - rho * e) / s);
    let piece = |lo: f64, hi: f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let kink = if rho != 0.0 { d / rho } else { f64::NAN };
        if kink > lo && kink < hi {
            rule.integrate(lo, kink, g) + rule.integrate(kink, hi, g)
        } else {
            rule.integrate(lo, hi, g)
        }
    };
    let p0 = if c <= 0.0 { piece(-EPS_LIMIT, c) } else { f2 - piece(c, EPS_LIMIT) };
    p0.clamp(0.0, f2)
}

fn check_f2(f2: f64) -> Result<()> {
    if !(f2 > 0.0 && f2 < 1.0) {
        return Err(Error::Domain(format!("choice probability {f2} outside (0,1)")));
    }
    Ok(())
}

/// P(m = 0, I = chosen) for one individual.
pub fn prob_unmarried_and_major(
    params: &JointParams,
    x: &[f64],
    chosen: usize,
    f2: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_f2(f2)?;
    let rho = rho_transform(params.rho_raw[chosen]);
    Ok(p0_core(dot(x, &params.gamma) + params.tau[chosen], f2, rho, rule))
}

/// P(m = 1, I = chosen) = F₂ − P(m = 0, I = chosen).
pub fn prob_married_and_major(
    params: &JointParams,
    x: &[f64],
    chosen: usize,
    f2: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let p0 = prob_unmarried_and_major(params, x, chosen, f2, rule)?;
    let p1 = f2 - p0;
    if p1 < -1e-12 {
        return Err(Error::Internal(format!("P(m=1, I) = {p1} is negative")));
    }
    Ok(p1.max(0.0))
}

/// P(m = 1 | I = alt) for one individual.
pub(crate) fn conditional_outcome_prob(params: &JointParams, x: &[f64], alt: usize, f2: f64, rule: &QuadratureRule) -> f64 {
    let f2 = f2.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let rho = rho_transform(params.rho_raw[alt]);
    1.0 - p0_core(dot(x, &params.gamma) + params.tau[alt], f2, rho, rule) / f2
}

fn row_loglik(params: &JointParams, x: &[f64], chosen: usize, m: u8, f2: f64, rule: &QuadratureRule) -> f64 {
    let f2 = f2.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let rho = rho_transform(params.rho_raw[chosen]);
    let p0 = p0_core(dot(x, &params.gamma) + params.tau[chosen], f2, rho, rule);
    let p = if m == 0 { p0 } else { f2 - p0 };
    p.max(PROB_FLOOR).ln()
}

/// Row log-likelihood and its gradient in (γ, τ, raw ρ) with F₂ fixed.
fn row_score(params: &JointParams, x: &[f64], chosen: usize, m: u8, f2: f64, rule: &QuadratureRule) -> (f64, Vec<f64>) {
    let kx = x.len();
    let j = params.tau.len();
    let mut g = vec![0.0; kx + 2 * j];
    let f2 = f2.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let raw = params.rho_raw[chosen];
    let rho = rho_transform(raw);
    let index = dot(x, &params.gamma) + params.tau[chosen];
    let p0 = p0_core(index, f2, rho, rule);
    let (p, sign) = if m == 0 { (p0, 1.0) } else { (f2 - p0, -1.0) };
    if p < PROB_FLOOR {
        return (PROB_FLOOR.ln(), g);
    }
    let c = -index;
    let d = quantile_unchecked(f2);
    // 1 − ρ² as sech²(raw/2), which stays positive long after ρ rounds to ±1.
    let s = 1.0 / (0.5 * raw).cosh();
    let s2 = s * s;
    let gap = d - rho * c;
    let dc = std_normal_pdf(c) * if s > 0.0 { std_normal_cdf(gap / s) } else if gap >= 0.0 { 1.0 } else { 0.0 };
    // φ₂(c, d; ρ)·dρ/draw with the 1/√(1−ρ²) of the density cancelled against sech².
    let q = (c * c - 2.0 * rho * c * d + d * d).max(0.0);
    let draw = if s2 > 0.0 { -0.5 * s * (-q / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI) } else { 0.0 };
    let w = sign / p;
    for (gk, xk) in g.iter_mut().zip(x) {
        *gk = -w * dc * xk;
    }
    g[kx + chosen] = -w * dc;
    g[kx + j + chosen] = w * draw;
    (p.ln(), g)
}

fn check_aligned(params: &JointParams, data: &Dataset, f2: &[f64]) -> Result<()> {
    if f2.len() != data.n() {
        return Err(Error::Shape(format!("{} cached probabilities for {} rows", f2.len(), data.n())));
    }
    let j = data.alternatives();
    if params.gamma.len() != data.x.cols() || params.tau.len() != j || params.rho_raw.len() != j {
        return Err(Error::Shape("joint parameters do not match the data".into()));
    }
    Ok(())
}

pub fn joint_loglik_rows(params: &JointParams, data: &Dataset, f2: &[f64], rule: &QuadratureRule) -> Result<Vec<f64>> {
    check_aligned(params, data, f2)?;
    Ok((0..data.n())
        .into_par_iter()
        .map(|i| row_loglik(params, data.x.row(i), data.choice[i], data.outcome[i], f2[i], rule))
        .collect())
}

/// Σ_i log P(m_i, I_i) given per-row F₂ of the chosen alternative.
pub fn joint_loglik(params: &JointParams, data: &Dataset, f2: &[f64], rule: &QuadratureRule) -> Result<f64> {
    Ok(joint_loglik_rows(params, data, f2, rule)?.iter().sum())
}

/// Standalone probit log-likelihood of m on x·γ + τ_I.
pub fn binary_probit_loglik(gamma: &[f64], tau: &[f64], data: &Dataset) -> f64 {
    (0..data.n())
        .map(|i| {
            let idx = dot(data.x.row(i), gamma) + tau[data.choice[i]];
            let p = if data.outcome[i] == 1 { std_normal_cdf(idx) } else { std_normal_cdf(-idx) };
            p.max(PROB_FLOOR).ln()
        })
        .sum()
}

/// Where the choice probabilities come from.
#[derive(Debug, Clone, Copy)]
pub enum F2Source<'a> {
    /// Per-row probabilities of the chosen alternative, held fixed.
    Cached(&'a [f64]),
    /// Recompute from the choice model (required for full mode).
    Model { wage: Option<&'a Matrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mode: FitMode,
    pub params: JointParams,
    /// Parameter labels on the natural scale (ρ rather than its raw transform).
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub cov: Matrix,
    pub rho_cov: Option<Matrix>,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub opg_rank: usize,
    pub opg_flagged: bool,
    pub quadrature_order: usize,
    pub seed_record: RngStream,
}

impl FitResult {
    pub fn rho(&self) -> Vec<f64> {
        self.params.rho()
    }

    pub fn estimate(&self, name: &str) -> Option<(f64, f64)> {
        let k = self.names.iter().position(|n| n == name)?;
        Some((self.estimates[k], self.se[k]))
    }
}

/// Refuse fits whose identification rests on functional form alone.
pub fn check_identification(data: &Dataset) -> Result<()> {
    let ex = &data.exclusions;
    let nonconstant = |name: &str| {
        data.column(name).is_some_and(|c| c.iter().any(|&v| v != c[0]))
    };
    if !ex.z_only.iter().any(|c| nonconstant(c)) {
        return Err(Error::Specification(
            "the choice equation needs a non-constant covariate excluded from the outcome equation".into(),
        ));
    }
    if ex.x_only.is_empty() {
        return Err(Error::Specification(
            "the outcome equation needs a covariate excluded from the choice equation".into(),
        ));
    }
    for (k, name) in data.x_names().iter().enumerate() {
        let col = data.x.column(k);
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::Specification(format!(
                "outcome covariate '{name}' is constant; the alternative effects already act as intercepts"
            )));
        }
    }
    Ok(())
}

fn names(data: &Dataset, beta: &ChoiceParams, mode: FitMode) -> Vec<String> {
    let j = data.alternatives();
    let mut out = Vec::new();
    if mode == FitMode::Full {
        out.extend(beta.free_names(data.z_names()));
    }
    out.extend(data.x_names().iter().map(|x| format!("gamma.{x}")));
    out.extend((1..=j).map(|k| format!("tau[{k}]")));
    out.extend((1..=j).map(|k| format!("rho[{k}]")));
    out
}

/// Maximize the joint likelihood over (γ, τ, ρ) with F₂ fixed, or over all
/// parameters including β in full mode.
pub fn fit_joint(
    data: &Dataset,
    source: F2Source<'_>,
    init: &JointParams,
    mode: FitMode,
    rule: &QuadratureRule,
    opt: &OptimConfig,
) -> Result<FitResult> {
    opt.validate()?;
    check_identification(data)?;
    let j = data.alternatives();
    let kx = data.x.cols();
    if init.gamma.len() != kx || init.tau.len() != j || init.rho_raw.len() != j || init.beta.alternatives() != j {
        return Err(Error::Shape("initial joint parameters do not match the data".into()));
    }
    let seed = match init.beta.kernel {
        crate::choice_model::Kernel::Probit { ghk, .. } => ghk.master_seed,
        crate::choice_model::Kernel::Logit => 0,
    };
    let n = data.n();
    let (res, scores) = match (mode, source) {
        (FitMode::TwoStep, source) => {
            let owned;
            let f2: &[f64] = match source {
                F2Source::Cached(f) => f,
                F2Source::Model { wage } => {
                    owned = ChoiceEngine::new(data, wage, &init.beta.kernel)?.chosen_probs(&init.beta);
                    &owned
                }
            };
            check_aligned(init, data, f2)?;
            let rows = |t: &[f64]| -> Vec<(f64, Vec<f64>)> {
                let p = init.with_outcome_theta(t);
                (0..n)
                    .into_par_iter()
                    .map(|i| row_score(&p, data.x.row(i), data.choice[i], data.outcome[i], f2[i], rule))
                    .collect()
            };
            let fg = |t: &[f64]| {
                let mut f = 0.0;
                let mut g = vec![0.0; t.len()];
                for (li, gi) in rows(t) {
                    f += li;
                    for (a, b) in g.iter_mut().zip(&gi) {
                        *a += b;
                    }
                }
                (f, g)
            };
            let res = maximize(fg, &init.outcome_theta(), opt);
            let per_row = rows(&res.x);
            let scores = Matrix::from_fn(n, res.x.len(), |i, k| per_row[i].1[k]);
            (res, scores)
        }
        (FitMode::Full, F2Source::Model { wage }) => {
            let eng = ChoiceEngine::new(data, wage, &init.beta.kernel)?;
            let nb = init.beta.free().len();
            let mut t0 = init.beta.free();
            t0.extend(init.outcome_theta());
            let rows_fn = |t: &[f64]| -> Vec<f64> {
                let beta = init.beta.with_free(&t[..nb]);
                let p = JointParams { beta, ..init.with_outcome_theta(&t[nb..]) };
                let f2 = eng.chosen_probs(&p.beta);
                (0..n)
                    .into_par_iter()
                    .map(|i| row_loglik(&p, data.x.row(i), data.choice[i], data.outcome[i], f2[i], rule))
                    .collect()
            };
            let total = |t: &[f64]| -> f64 { rows_fn(t).iter().sum() };
            let res = maximize(|t| (total(t), central_gradient(total, t, opt.fd_step)), &t0, opt);
            // Per-row scores by central differences for the outer-product covariance.
            let theta = &res.x;
            let mut scores = Matrix::zeros(n, theta.len());
            let mut tt = theta.clone();
            for k in 0..theta.len() {
                let h = opt.fd_step * (1.0 + theta[k].abs());
                tt[k] = theta[k] + h;
                let up = rows_fn(&tt);
                tt[k] = theta[k] - h;
                let dn = rows_fn(&tt);
                tt[k] = theta[k];
                for i in 0..n {
                    scores[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
                }
            }
            (res, scores)
        }
        (FitMode::Full, F2Source::Cached(_)) => {
            return Err(Error::Specification("full mode re-estimates the choice model and needs its inputs".into()))
        }
    };
    let theta = res.x.clone();
    let p = theta.len();
    let opg = opg_covariance(&scores)?;
    let nb = if mode == FitMode::Full { init.beta.free().len() } else { 0 };
    let params = {
        let beta = if mode == FitMode::Full { init.beta.with_free(&theta[..nb]) } else { init.beta.clone() };
        JointParams { beta, beta_estimated: mode == FitMode::Full, ..init.with_outcome_theta(&theta[nb..]) }
    };
    // Delta method through the ρ transform.
    let jac: Vec<f64> = (0..p)
        .map(|k| if k >= nb + kx + j { rho_transform_derivative(theta[k]) } else { 1.0 })
        .collect();
    let cov = Matrix::from_fn(p, p, |a, b| jac[a] * opg.cov[(a, b)] * jac[b]);
    let mut estimates = theta.clone();
    for e in estimates.iter_mut().skip(nb + kx + j) {
        *e = rho_transform(*e);
    }
    let r0 = nb + kx + j;
    let rho_cov = Matrix::from_fn(j, j, |a, b| cov[(r0 + a, r0 + b)]);
    Ok(FitResult {
        mode,
        names: names(data, &init.beta, mode),
        se: (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect(),
        estimates,
        rho_cov: Some(rho_cov),
        cov,
        params,
        loglik: res.f,
        gradient_norm: res.gradient_norm,
        iterations: res.iterations,
        converged: res.converged,
        opg_rank: opg.rank,
        opg_flagged: opg.flagged,
        quadrature_order: rule.order(),
        seed_record: RngStream::new(seed, 0),
    })
}
