//! Linear regressions for earnings and hours, and the per-alternative
//! expected hourly wage they imply.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats_core::Matrix;

/// Least-squares coefficients with their classical standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub residual_variance: f64,
    pub condition_number: f64,
    pub n: usize,
}

/// OLS by Householder QR. No intercept is added.
pub fn fit_ols(design: &Matrix, response: &[f64], names: &[String]) -> Result<OlsFit> {
    let (n, p) = (design.rows(), design.cols());
    if response.len() != n {
        return Err(Error::Shape(format!("{n} design rows but {} responses", response.len())));
    }
    if names.len() != p {
        return Err(Error::Shape(format!("{p} columns but {} names", names.len())));
    }
    if n < p || p == 0 {
        return Err(Error::SingularDesign { columns: names.to_vec() });
    }
    let x = design.to_nalgebra();
    let qr = x.clone().qr();
    let r = qr.r();
    let col_norm: Vec<f64> = (0..p).map(|k| x.column(k).norm()).collect();
    let collinear: Vec<String> = (0..p)
        .filter(|&k| !(r[(k, k)].abs() > 1e-10 * col_norm[k].max(f64::MIN_POSITIVE)))
        .map(|k| names[k].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::SingularDesign { columns: collinear });
    }
    let y = DVector::from_column_slice(response);
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign { columns: names.to_vec() })?;
    let resid = &y - &x * &beta;
    let dof = (n - p).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign { columns: names.to_vec() })?;
    let cov: DMatrix<f64> = &rinv * rinv.transpose() * s2;
    let sv = r.singular_values();
    let condition_number = sv.max() / sv.min();
    Ok(OlsFit {
        names: names.to_vec(),
        coef: beta.iter().cloned().collect(),
        se: (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect(),
        residual_variance: s2,
        condition_number,
        n,
    })
}

/// One labor-outcome regression: covariates, a full set of alternative
/// dummies, and extra exogenous shifters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageModel {
    pub delta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub lambda: Vec<f64>,
    pub residual_variance: f64,
    pub ols: OlsFit,
}

impl FirstStageModel {
    /// Regress `response` on `[covariates | 1(I=j) for every j | extra]`.
    pub fn fit(
        covariates: &Matrix,
        covariate_names: &[String],
        choice: &[usize],
        alternatives: usize,
        extra: &Matrix,
        extra_names: &[String],
        response: &[f64],
    ) -> Result<Self> {
        let n = response.len();
        if covariates.rows() != n || extra.rows() != n || choice.len() != n {
            return Err(Error::Shape("first-stage inputs have mismatched row counts".into()));
        }
        let mean = response.iter().sum::<f64>() / n.max(1) as f64;
        if response.iter().all(|v| (v - mean).abs() <= 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::Degenerate("first-stage response has zero variance".into()));
        }
        let kc = covariates.cols();
        let ke = extra.cols();
        let design = Matrix::from_fn(n, kc + alternatives + ke, |i, c| {
            if c < kc {
                covariates[(i, c)]
            } else if c < kc + alternatives {
                f64::from(u8::from(choice[i] == c - kc))
            } else {
                extra[(i, c - kc - alternatives)]
            }
        });
        let mut names = covariate_names.to_vec();
        names.extend((1..=alternatives).map(|j| format!("alt{j}")));
        names.extend_from_slice(extra_names);
        let ols = fit_ols(&design, response, &names)?;
        Ok(Self {
            delta: ols.coef[..kc].to_vec(),
            kappa: ols.coef[kc..kc + alternatives].to_vec(),
            lambda: ols.coef[kc + alternatives..].to_vec(),
            residual_variance: ols.residual_variance,
            ols,
        })
    }

    /// Prediction with the alternative dummy set to `alt`.
    pub fn predict(&self, covariates: &[f64], alt: usize, extra: &[f64]) -> f64 {
        let a: f64 = self.delta.iter().zip(covariates).map(|(d, z)| d * z).sum();
        let b: f64 = self.lambda.iter().zip(extra).map(|(l, z)| l * z).sum();
        a + self.kappa[alt] + b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLaborOutcomes {
    pub expected_earnings: Vec<f64>,
    pub expected_hours: Vec<f64>,
    pub normalized_wage: Vec<f64>,
}

/// Covariates of one individual as seen by the two regressions.
#[derive(Debug, Clone, Copy)]
pub struct LaborRow<'a> {
    pub index: usize,
    pub covariates: &'a [f64],
    pub earnings_extra: &'a [f64],
    pub hours_extra: &'a [f64],
}

pub fn predict_counterfactuals(
    model_w: &FirstStageModel,
    model_h: &FirstStageModel,
    individual: LaborRow<'_>,
) -> Result<ExpectedLaborOutcomes> {
    let j = model_w.kappa.len();
    if model_h.kappa.len() != j {
        return Err(Error::Shape("earnings and hours models disagree on alternatives".into()));
    }
    let w: Vec<f64> = (0..j)
        .map(|a| model_w.predict(individual.covariates, a, individual.earnings_extra))
        .collect();
    let h: Vec<f64> = (0..j)
        .map(|a| model_h.predict(individual.covariates, a, individual.hours_extra))
        .collect();
    if h.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DegeneratePrediction { rows: vec![individual.index] });
    }
    let v = w.iter().zip(&h).map(|(a, b)| a / b).collect();
    Ok(ExpectedLaborOutcomes { expected_earnings: w, expected_hours: h, normalized_wage: v })
}

/// Predictions for every row; all offending rows are reported together.
pub fn predict_all(
    model_w: &FirstStageModel,
    model_h: &FirstStageModel,
    rows: &[LaborRow<'_>],
) -> Result<Vec<ExpectedLaborOutcomes>> {
    let out: Vec<Result<ExpectedLaborOutcomes>> =
        rows.par_iter().map(|r| predict_counterfactuals(model_w, model_h, *r)).collect();
    let mut bad = Vec::new();
    let mut good = Vec::with_capacity(out.len());
    for r in out {
        match r {
            Ok(v) => good.push(v),
            Err(Error::DegeneratePrediction { rows }) => bad.extend(rows),
            Err(e) => return Err(e),
        }
    }
    if bad.is_empty() {
        Ok(good)
    } else {
        Err(Error::DegeneratePrediction { rows: bad })
    }
}

/// Stack the normalized wages into an n×J matrix.
pub fn wage_matrix(outcomes: &[ExpectedLaborOutcomes]) -> Matrix {
    let j = outcomes.first().map_or(0, |o| o.normalized_wage.len());
    Matrix::from_fn(outcomes.len(), j, |i, k| outcomes[i].normalized_wage[k])
}
