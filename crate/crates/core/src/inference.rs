//! Outer-product standard errors, the pipeline bootstrap and average marginal effects.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice_model::{choice_probabilities, ChoiceEngine, ChoiceFit};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::joint_model::{conditional_outcome_prob, FitResult};
use crate::pipeline::{estimate_names, estimate_vector, run_pipeline, PipelineConfig, PipelineFit};
use crate::stats_core::{symmetric_pinv, Matrix, QuadratureRule, RngStream};

const BOOT_STREAM: u64 = 0x626f_6f74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpgCovariance {
    pub cov: Matrix,
    pub rank: usize,
    /// True when the outer product was singular or there were too few rows.
    pub flagged: bool,
}

/// Inverse of Σ_i g_i g_iᵀ (pseudo-inverse when singular).
pub fn opg_covariance(per_row_gradients: &Matrix) -> Result<OpgCovariance> {
    let (n, p) = (per_row_gradients.rows(), per_row_gradients.cols());
    let mut outer = Matrix::zeros(p, p);
    for i in 0..n {
        let g = per_row_gradients.row(i);
        for a in 0..p {
            for b in 0..=a {
                outer[(a, b)] += g[a] * g[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            outer[(b, a)] = outer[(a, b)];
        }
    }
    if outer.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("non-finite score contributions".into()));
    }
    let (cov, rank) = symmetric_pinv(&outer, 1e-12)?;
    Ok(OpgCovariance { cov, rank, flagged: rank < p || n <= p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub names: Vec<String>,
    /// One row per successful replicate, in replicate order.
    pub estimates: Matrix,
    pub se: Vec<f64>,
    pub percentile_ci: Vec<(f64, f64)>,
    pub failures: usize,
    pub failed_replicates: Vec<usize>,
    pub warning: Option<String>,
    pub seed: RngStream,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Row indices for replicate `r`.
pub fn bootstrap_indices(seed: &RngStream, r: usize, n: usize) -> Vec<usize> {
    let mut cur = seed.substream(r as u64).cursor();
    (0..n).map(|_| cur.next_below(n)).collect()
}

/// Resample rows with replacement and rerun the whole pipeline `b` times.
pub fn bootstrap_pipeline(data: &Dataset, config: &PipelineConfig, b: usize, seed: u64) -> Result<BootstrapResult> {
    bootstrap_statistic(data, config, b, seed, |_, fit| Ok((estimate_names(fit), estimate_vector(fit))))
}

/// Bootstrap any statistic of a fitted pipeline. `stat` gets the resampled
/// data and its fit and returns labels and values; labels must not depend on
/// the sample. Replicates that error or fail to converge are dropped.
pub fn bootstrap_statistic<F>(data: &Dataset, config: &PipelineConfig, b: usize, seed: u64, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&Dataset, &PipelineFit) -> Result<(Vec<String>, Vec<f64>)> + Sync,
{
    if b < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
    }
    config.validate()?;
    let stream = RngStream::new(seed, BOOT_STREAM);
    let n = data.n();
    let outcomes: Vec<Option<(Vec<String>, Vec<f64>)>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let idx = bootstrap_indices(&stream, r, n);
            let sample = data.select_rows(&idx);
            match run_pipeline(&sample, config) {
                Ok(fit) if fit.converged() => stat(&sample, &fit).ok().filter(|v| v.1.iter().all(|x| x.is_finite())),
                _ => None,
            }
        })
        .collect();
    let names = outcomes.iter().flatten().map(|o| o.0.clone()).next().unwrap_or_default();
    let outcomes: Vec<_> = outcomes.into_iter().map(|o| o.filter(|v| v.0 == names)).collect();
    let failed_replicates: Vec<usize> = (0..b).filter(|&r| outcomes[r].is_none()).collect();
    let rows: Vec<Vec<f64>> = outcomes.into_iter().flatten().map(|o| o.1).collect();
    let p = names.len();
    let s = rows.len();
    let estimates = Matrix::from_fn(s, p, |i, k| rows[i][k]);
    let (mut se, mut ci) = (Vec::new(), Vec::new());
    if s >= 2 {
        for k in 0..p {
            let mut col = estimates.column(k);
            let m = col.iter().sum::<f64>() / s as f64;
            se.push((col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s - 1) as f64).sqrt());
            col.sort_by(f64::total_cmp);
            ci.push((percentile(&col, 0.025), percentile(&col, 0.975)));
        }
    }
    let failures = failed_replicates.len();
    let warning = (failures * 5 > b).then(|| {
        format!("{failures} of {b} bootstrap replicates failed; standard errors may be unreliable")
    });
    Ok(BootstrapResult {
        replicates: b,
        names,
        estimates,
        se,
        percentile_ci: ci,
        failures,
        failed_replicates,
        warning,
        seed: stream,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmeTarget {
    Outcome,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmeReport {
    pub target: AmeTarget,
    pub labels: Vec<String>,
    pub effects: Vec<f64>,
    /// Filled from bootstrap replicates when requested; empty otherwise.
    pub se: Vec<f64>,
    pub definition: String,
}

/// Relative finite-difference step for continuous covariates.
pub const AME_STEP: f64 = 1e-4;

fn column_sd(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Outcome AMEs: forcing each non-base alternative against the base, and
/// the derivative in each x column, both on P(m = 1 | I).
///
/// `choice_probs` holds F₂ for every row and alternative (n×J).
pub fn ame_outcome(fit: &FitResult, data: &Dataset, choice_probs: &Matrix, rule: &QuadratureRule) -> Result<AmeReport> {
    let n = data.n();
    let j = data.alternatives();
    if choice_probs.rows() != n || choice_probs.cols() != j {
        return Err(Error::Shape("choice probabilities must be n×J".into()));
    }
    let params = &fit.params;
    let base = data.base();
    let mut labels = Vec::new();
    let mut effects = Vec::new();
    let cond = |x: &[f64], a: usize, i: usize| conditional_outcome_prob(params, x, a, choice_probs[(i, a)], rule);
    for alt in (0..j).filter(|&a| a != base) {
        let s: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = data.x.row(i);
                cond(x, alt, i) - cond(x, base, i)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        labels.push(format!("alternative[{}]", alt + 1));
        effects.push(s / n as f64);
    }
    for (k, name) in data.x_names().iter().enumerate() {
        let sd = column_sd(&data.x.column(k));
        let h = AME_STEP * if sd > 0.0 { sd } else { 1.0 };
        let s: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut x = data.x.row(i).to_vec();
                let c = data.choice[i];
                x[k] += h;
                let up = cond(&x, c, i);
                x[k] -= 2.0 * h;
                let dn = cond(&x, c, i);
                (up - dn) / (2.0 * h)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        labels.push(format!("x.{name}"));
        effects.push(s / n as f64);
    }
    Ok(AmeReport {
        target: AmeTarget::Outcome,
        labels,
        effects,
        se: Vec::new(),
        definition: format!(
            "alternative effects: mean over all rows of P(m=1 | I=j) - P(m=1 | I={}); \
             covariate effects: central difference of P(m=1 | observed I), step {AME_STEP} x SD",
            base + 1
        ),
    })
}

/// Choice AMEs: derivative of every alternative's probability in each
/// non-constant z column and, when the model has one, in each alternative's
/// normalized wage.
pub fn ame_choice(fit: &ChoiceFit, data: &Dataset, wage: Option<&Matrix>) -> Result<AmeReport> {
    let params = &fit.params;
    let eng = ChoiceEngine::new(data, wage, &params.kernel)?;
    let n = data.n();
    let j = data.alternatives();
    let mut labels = Vec::new();
    let mut effects = Vec::new();
    let wage_at = |i: usize| wage.map_or(vec![0.0; j], |w| w.row(i).to_vec());
    let avg = |perturb: &(dyn Fn(&mut Vec<f64>, &mut Vec<f64>, f64) + Sync), h: f64| -> Vec<f64> {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let eval = |sign: f64| {
                    let mut z = data.z.row(i).to_vec();
                    let mut w = wage_at(i);
                    perturb(&mut z, &mut w, sign * h);
                    let v = params.utilities(&z, Some(&w));
                    eng.probs_from_v(params, &v, i)
                };
                let up = eval(1.0);
                let dn = eval(-1.0);
                up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        (0..j).map(|a| rows.iter().map(|r| r[a]).sum::<f64>() / n as f64).collect()
    };
    for (k, name) in data.z_names().iter().enumerate() {
        let col = data.z.column(k);
        let sd = column_sd(&col);
        if sd == 0.0 {
            continue;
        }
        let e = avg(&|z: &mut Vec<f64>, _: &mut Vec<f64>, d: f64| z[k] += d, AME_STEP * sd);
        for (a, v) in e.into_iter().enumerate() {
            labels.push(format!("{name} -> alternative[{}]", a + 1));
            effects.push(v);
        }
    }
    // Without a wage term there is no wage to move.
    for l in (0..j).filter(|_| wage.is_some()) {
        let sd = wage.map_or(0.0, |w| column_sd(&w.column(l)));
        let h = AME_STEP * if sd > 0.0 { sd } else { 1.0 };
        let e = avg(&|_: &mut Vec<f64>, w: &mut Vec<f64>, d: f64| w[l] += d, h);
        for (a, v) in e.into_iter().enumerate() {
            labels.push(format!("wage[{}] -> alternative[{}]", l + 1, a + 1));
            effects.push(v);
        }
    }
    Ok(AmeReport {
        target: AmeTarget::Choice,
        labels,
        effects,
        se: Vec::new(),
        definition: format!(
            "mean over rows of the central-difference derivative of each choice probability, step {AME_STEP} x SD; \
             wage effects move one alternative's normalized wage with all others fixed"
        ),
    })
}

/// Outcome and choice AMEs of a fitted pipeline.
pub fn pipeline_ames(data: &Dataset, fit: &PipelineFit, config: &PipelineConfig) -> Result<(AmeReport, AmeReport)> {
    let beta = &fit.joint.params.beta;
    let probs = choice_probabilities(beta, data, fit.wage.as_ref())?;
    let outcome = ame_outcome(&fit.joint, data, &probs, &config.rule()?)?;
    let mut choice_fit = fit.choice.clone();
    choice_fit.params = beta.clone();
    let choice = ame_choice(&choice_fit, data, fit.wage.as_ref())?;
    Ok((outcome, choice))
}

/// Fill the `se` of both reports from `b` pipeline bootstrap replicates.
pub fn bootstrap_ames(
    data: &Dataset,
    config: &PipelineConfig,
    b: usize,
    seed: u64,
    outcome: &mut AmeReport,
    choice: &mut AmeReport,
) -> Result<BootstrapResult> {
    let boot = bootstrap_statistic(data, config, b, seed, |d, fit| {
        let (o, c) = pipeline_ames(d, fit, config)?;
        let names = o.labels.iter().chain(&c.labels).cloned().collect();
        Ok((names, o.effects.into_iter().chain(c.effects).collect()))
    })?;
    let k = outcome.labels.len();
    let expected: Vec<String> = outcome.labels.iter().chain(&choice.labels).cloned().collect();
    if boot.se.len() == expected.len() && boot.names == expected {
        outcome.se = boot.se[..k].to_vec();
        choice.se = boot.se[k..].to_vec();
    }
    Ok(boot)
}
