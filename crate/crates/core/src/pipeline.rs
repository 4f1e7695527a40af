//! First stage → choice model → joint model, as one call.

use serde::{Deserialize, Serialize};

use crate::choice_model::{chosen_probabilities, fit_choice, ChoiceFit, Kernel};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::first_stage::{predict_all, wage_matrix, FirstStageModel, LaborRow};
use crate::ghk::GhkConfig;
use crate::joint_model::{fit_joint, F2Source, FitMode, FitResult, JointParams, DEFAULT_QUADRATURE_ORDER};
use crate::optim::OptimConfig;
use crate::stats_core::{Matrix, QuadratureRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kernel: Kernel,
    pub quadrature_order: usize,
    pub optim: OptimConfig,
    pub mode: FitMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::probit(GhkConfig::default()),
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            optim: OptimConfig::default(),
            mode: FitMode::TwoStep,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_order < 2 {
            return Err(Error::Config("quadrature_order must be at least 2".into()));
        }
        if let Kernel::Probit { ghk, .. } = &self.kernel {
            ghk.validate()?;
        }
        self.optim.validate()
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        QuadratureRule::gauss_legendre(self.quadrature_order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub earnings: FirstStageModel,
    pub hours: FirstStageModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub first_stage: Option<FirstStage>,
    #[serde(skip)]
    pub wage: Option<Matrix>,
    pub choice: ChoiceFit,
    #[serde(skip)]
    pub f2: Vec<f64>,
    pub joint: FitResult,
}

impl PipelineFit {
    pub fn converged(&self) -> bool {
        self.choice.converged && self.joint.converged
    }
}

/// Fit both labor regressions and return them with the n×J wage matrix.
pub fn first_stage(data: &Dataset) -> Result<Option<(FirstStage, Matrix)>> {
    let (Some(labor), Some(ls)) = (&data.labor, &data.schema.labor) else {
        return Ok(None);
    };
    let j = data.alternatives();
    let earnings = FirstStageModel::fit(
        &labor.covariates,
        &ls.covariates,
        &data.choice,
        j,
        &labor.earnings_extra,
        &ls.earnings_extra,
        &labor.earnings,
    )?;
    let hours = FirstStageModel::fit(
        &labor.covariates,
        &ls.covariates,
        &data.choice,
        j,
        &labor.hours_extra,
        &ls.hours_extra,
        &labor.hours,
    )?;
    let rows: Vec<LaborRow<'_>> = (0..data.n())
        .map(|i| LaborRow {
            index: i,
            covariates: labor.covariates.row(i),
            earnings_extra: labor.earnings_extra.row(i),
            hours_extra: labor.hours_extra.row(i),
        })
        .collect();
    let outcomes = predict_all(&earnings, &hours, &rows)?;
    Ok(Some((FirstStage { earnings, hours }, wage_matrix(&outcomes))))
}

pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineFit> {
    cfg.validate()?;
    data.validate()?;
    crate::joint_model::check_identification(data)?;
    let rule = cfg.rule()?;
    let (fs, wage) = match first_stage(data)? {
        Some((fs, w)) => (Some(fs), Some(w)),
        None => (None, data.wage.clone()),
    };
    let choice = fit_choice(data, wage.as_ref(), cfg.kernel, None, &cfg.optim)?;
    let f2 = chosen_probabilities(&choice.params, data, wage.as_ref())?;
    let init = JointParams::zeros(data.x.cols(), choice.params.clone());
    let mut joint = fit_joint(data, F2Source::Cached(&f2), &init, FitMode::TwoStep, &rule, &cfg.optim)?;
    if cfg.mode == FitMode::Full {
        let start = joint.params.clone();
        joint = fit_joint(data, F2Source::Model { wage: wage.as_ref() }, &start, FitMode::Full, &rule, &cfg.optim)?;
    }
    Ok(PipelineFit { first_stage: fs, wage, choice, f2, joint })
}

/// Labels of [`estimate_vector`] in order.
pub fn estimate_names(fit: &PipelineFit) -> Vec<String> {
    let mut out = fit.choice.names.clone();
    out.extend(fit.joint.names.iter().filter(|n| !n.starts_with("beta")).cloned());
    out
}

/// Choice coefficients followed by γ, τ and ρ.
pub fn estimate_vector(fit: &PipelineFit) -> Vec<f64> {
    let mut out = fit.joint.params.beta.free();
    let skip = if fit.joint.mode == FitMode::Full { out.len() } else { 0 };
    out.extend_from_slice(&fit.joint.estimates[skip..]);
    out
}
