//! Polychotomous choice model: V_ij = v^l_ij + z_i·β_j with the wage
//! coefficient fixed at 1 and the base alternative's β fixed at 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::ghk::{softmax, GhkConfig, MnpKernel};
use crate::optim::{central_gradient, maximize, OptimConfig};
use crate::stats_core::{dot, Matrix, RngStream};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// Multinomial probit by GHK with exchangeable Σ_u (off-diagonal `a`, fixed).
    Probit {
        #[serde(default)]
        ghk: GhkConfig,
        #[serde(default)]
        a: f64,
    },
    Logit,
}

impl Kernel {
    pub fn probit(ghk: GhkConfig) -> Self {
        Kernel::Probit { ghk, a: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceParams {
    /// J×K coefficients on z; the base row is zero.
    pub beta: Matrix,
    pub base: usize,
    pub kernel: Kernel,
    pub wage_coefficient: f64,
}

impl ChoiceParams {
    pub fn zeros(alternatives: usize, k: usize, base: usize, kernel: Kernel) -> Self {
        Self { beta: Matrix::zeros(alternatives, k), base, kernel, wage_coefficient: 1.0 }
    }

    pub fn alternatives(&self) -> usize {
        self.beta.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.base >= self.alternatives() {
            return Err(Error::Shape("base alternative out of range".into()));
        }
        if self.beta.row(self.base).iter().any(|&b| b != 0.0) {
            return Err(Error::Domain("base alternative's coefficients must be zero".into()));
        }
        if self.wage_coefficient != 1.0 {
            return Err(Error::Domain("wage coefficient is normalized to 1".into()));
        }
        Ok(())
    }

    /// Coefficients of the non-base alternatives, row by row.
    pub fn free(&self) -> Vec<f64> {
        (0..self.alternatives())
            .filter(|&j| j != self.base)
            .flat_map(|j| self.beta.row(j).to_vec())
            .collect()
    }

    pub fn with_free(&self, theta: &[f64]) -> Self {
        let mut out = self.clone();
        let k = self.beta.cols();
        let mut pos = 0;
        for j in (0..self.alternatives()).filter(|&j| j != self.base) {
            out.beta.row_mut(j).copy_from_slice(&theta[pos..pos + k]);
            pos += k;
        }
        out
    }

    pub fn free_names(&self, z_names: &[String]) -> Vec<String> {
        (0..self.alternatives())
            .filter(|&j| j != self.base)
            .flat_map(|j| z_names.iter().map(move |z| format!("beta[{}].{z}", j + 1)))
            .collect()
    }

    /// Systematic utilities for one individual.
    pub fn utilities(&self, z: &[f64], wage: Option<&[f64]>) -> Vec<f64> {
        (0..self.alternatives())
            .map(|j| dot(z, self.beta.row(j)) + wage.map_or(0.0, |w| self.wage_coefficient * w[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceFit {
    pub params: ChoiceParams,
    pub names: Vec<String>,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed_record: RngStream,
    pub warnings: Vec<String>,
}

/// Choice probabilities for a fixed dataset.
pub(crate) struct ChoiceEngine<'a> {
    data: &'a Dataset,
    wage: Option<&'a Matrix>,
    mnp: Option<MnpKernel>,
}

impl<'a> ChoiceEngine<'a> {
    pub(crate) fn new(data: &'a Dataset, wage: Option<&'a Matrix>, kernel: &Kernel) -> Result<Self> {
        let j = data.alternatives();
        if let Some(w) = wage {
            if w.rows() != data.n() || w.cols() != j {
                return Err(Error::Shape(format!(
                    "wage matrix is {}x{}, expected {}x{j}",
                    w.rows(),
                    w.cols(),
                    data.n()
                )));
            }
        }
        let mnp = match kernel {
            Kernel::Probit { ghk, a } => {
                ghk.validate()?;
                Some(MnpKernel::exchangeable(j, *a)?)
            }
            Kernel::Logit => None,
        };
        Ok(Self { data, wage, mnp })
    }

    fn utilities(&self, p: &ChoiceParams, i: usize) -> Vec<f64> {
        p.utilities(self.data.z.row(i), self.wage.map(|w| w.row(i)))
    }

    /// P(I_i = alt).
    pub(crate) fn prob(&self, p: &ChoiceParams, i: usize, alt: usize) -> f64 {
        let v = self.utilities(p, i);
        self.prob_from_v(p, &v, i, alt)
    }

    fn prob_from_v(&self, p: &ChoiceParams, v: &[f64], i: usize, alt: usize) -> f64 {
        match (&p.kernel, &self.mnp) {
            (Kernel::Probit { ghk, .. }, Some(k)) => k.prob(v, alt, ghk, &ghk.stream_for(i as u64)),
            _ => softmax(v)[alt],
        }
    }

    /// All J probabilities; probit values are rescaled to sum to one.
    pub(crate) fn probs_from_v(&self, p: &ChoiceParams, v: &[f64], i: usize) -> Vec<f64> {
        match (&p.kernel, &self.mnp) {
            (Kernel::Probit { ghk, .. }, Some(k)) => {
                let s = ghk.stream_for(i as u64);
                let raw: Vec<f64> = (0..v.len()).map(|j| k.prob(v, j, ghk, &s)).collect();
                let tot: f64 = raw.iter().sum();
                if tot > 0.0 {
                    raw.iter().map(|x| x / tot).collect()
                } else {
                    vec![1.0 / v.len() as f64; v.len()]
                }
            }
            _ => softmax(v),
        }
    }

    pub(crate) fn chosen_probs(&self, p: &ChoiceParams) -> Vec<f64> {
        (0..self.data.n())
            .into_par_iter()
            .map(|i| self.prob(p, i, self.data.choice[i]))
            .collect()
    }

    pub(crate) fn loglik_rows(&self, p: &ChoiceParams) -> Vec<f64> {
        self.chosen_probs(p).into_iter().map(|q| q.max(PROB_FLOOR).ln()).collect()
    }

    pub(crate) fn all_probs(&self, p: &ChoiceParams) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..self.data.n())
            .into_par_iter()
            .map(|i| {
                let v = self.utilities(p, i);
                self.probs_from_v(p, &v, i)
            })
            .collect();
        let j = self.data.alternatives();
        Matrix::from_fn(rows.len(), j, |i, k| rows[i][k])
    }

    /// Logit log-likelihood and its analytic gradient in the free coefficients.
    fn logit_value_and_gradient(&self, p: &ChoiceParams) -> (f64, Vec<f64>) {
        let j = p.alternatives();
        let k = p.beta.cols();
        let n = self.data.n();
        let rows: Vec<(f64, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let probs = softmax(&self.utilities(p, i));
                let c = self.data.choice[i];
                let z = self.data.z.row(i);
                let mut g = Vec::with_capacity((j - 1) * k);
                for alt in (0..j).filter(|&a| a != p.base) {
                    let r = f64::from(u8::from(c == alt)) - probs[alt];
                    g.extend(z.iter().map(|zz| r * zz));
                }
                (probs[c].max(PROB_FLOOR).ln(), g)
            })
            .collect();
        let mut f = 0.0;
        let mut grad = vec![0.0; (j - 1) * k];
        for (li, gi) in rows {
            f += li;
            for (a, b) in grad.iter_mut().zip(gi) {
                *a += b;
            }
        }
        (f, grad)
    }
}

pub fn choice_loglik(params: &ChoiceParams, data: &Dataset, wage: Option<&Matrix>) -> Result<f64> {
    params.validate()?;
    let eng = ChoiceEngine::new(data, wage, &params.kernel)?;
    Ok(eng.loglik_rows(params).iter().sum())
}

/// n×J choice probabilities at `params`.
pub fn choice_probabilities(params: &ChoiceParams, data: &Dataset, wage: Option<&Matrix>) -> Result<Matrix> {
    let eng = ChoiceEngine::new(data, wage, &params.kernel)?;
    Ok(eng.all_probs(params))
}

/// P(I_i = I_i observed) for every row; the F₂ values the joint model conditions on.
pub fn chosen_probabilities(params: &ChoiceParams, data: &Dataset, wage: Option<&Matrix>) -> Result<Vec<f64>> {
    let eng = ChoiceEngine::new(data, wage, &params.kernel)?;
    Ok(eng.chosen_probs(params))
}

fn separation_warnings(data: &Dataset) -> Vec<String> {
    let j = data.alternatives();
    let mut out = Vec::new();
    for (c, name) in data.z_names().iter().enumerate() {
        let col = data.z.column(c);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
        if lo == hi {
            continue;
        }
        for alt in 0..j {
            let (mut inside, mut outside) = (Vec::new(), Vec::new());
            for (i, &v) in col.iter().enumerate() {
                if data.choice[i] == alt {
                    inside.push(v);
                } else {
                    outside.push(v);
                }
            }
            let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
            let (a0, a1) = range(&inside);
            let (b0, b1) = range(&outside);
            if a1 < b0 || b1 < a0 {
                out.push(format!("covariate '{name}' perfectly separates alternative {}", alt + 1));
            }
        }
    }
    out
}

/// Maximum (simulated) likelihood for β. Probit fits start from the logit fit
/// when no starting values are given.
pub fn fit_choice(
    data: &Dataset,
    wage: Option<&Matrix>,
    kernel: Kernel,
    init: Option<&ChoiceParams>,
    opt: &OptimConfig,
) -> Result<ChoiceFit> {
    opt.validate()?;
    let j = data.alternatives();
    let k = data.z.cols();
    let mut counts = vec![0usize; j];
    for &c in &data.choice {
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!("alternative {} is never chosen", empty + 1)));
    }
    let warnings = separation_warnings(data);
    let start = match init {
        Some(p) => {
            if p.beta.rows() != j || p.beta.cols() != k {
                return Err(Error::Shape("starting values do not match the data".into()));
            }
            ChoiceParams { kernel, ..p.clone() }
        }
        None => {
            let zero = ChoiceParams::zeros(j, k, data.base(), Kernel::Logit);
            match kernel {
                Kernel::Logit => zero,
                Kernel::Probit { .. } => {
                    let logit = fit_choice(data, wage, Kernel::Logit, Some(&zero), opt)?;
                    // Logit error differences have variance π²/3, probit ones 2 − 2a.
                    let scale = (6.0f64).sqrt() / std::f64::consts::PI;
                    let theta: Vec<f64> = logit.params.free().iter().map(|b| b * scale).collect();
                    ChoiceParams { kernel, ..logit.params.with_free(&theta) }
                }
            }
        }
    };
    start.validate()?;
    let eng = ChoiceEngine::new(data, wage, &kernel)?;
    let res = match kernel {
        Kernel::Logit => maximize(|t| eng.logit_value_and_gradient(&start.with_free(t)), &start.free(), opt),
        Kernel::Probit { .. } => {
            let f = |t: &[f64]| -> f64 { eng.loglik_rows(&start.with_free(t)).iter().sum() };
            maximize(|t| (f(t), central_gradient(f, t, opt.fd_step)), &start.free(), opt)
        }
    };
    let params = start.with_free(&res.x);
    let seed = match kernel {
        Kernel::Probit { ghk, .. } => ghk.master_seed,
        Kernel::Logit => 0,
    };
    Ok(ChoiceFit {
        names: params.free_names(data.z_names()),
        params,
        loglik: res.f,
        gradient_norm: res.gradient_norm,
        iterations: res.iterations,
        converged: res.converged,
        seed_record: RngStream::new(seed, 0),
        warnings,
    })
}
