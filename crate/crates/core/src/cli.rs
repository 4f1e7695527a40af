//! Batch front end: TOML run config → pipeline → JSON result files.
//!
//! Exit codes: 0 success (for `test`, fail-to-reject), 1 `test` rejected ρ = 0,
//! 2 config error, 3 data error, 4 non-convergence, 5 internal error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::choice_model::Kernel;
use crate::data_io::{load_dataset, save_dataset, simulate_dgp, Dataset, DgpConfig, Schema, TruthRecord};
use crate::error::{Error, Result};
use crate::ghk::GhkConfig;
use crate::inference::{bootstrap_ames, bootstrap_pipeline, pipeline_ames, AmeReport, BootstrapResult};
use crate::joint_model::FitMode;
use crate::optim::OptimConfig;
use crate::pipeline::{first_stage, run_pipeline, PipelineConfig, PipelineFit};
use crate::unobs_test::{wald_rho_test, TestReport};

pub const FORMAT_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "COPULA_CHOICE_THREADS";

pub const EXIT_REJECT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Probit,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub dgp: Option<DgpConfig>,
    pub schema: Option<Schema>,
    pub kernel: KernelChoice,
    /// Exchangeable correlation of the probit utility errors.
    pub utility_correlation: f64,
    pub ghk: GhkConfig,
    pub quadrature_order: usize,
    pub optim: OptimConfig,
    pub mode: FitMode,
    pub bootstrap: usize,
    /// Replicates for AME standard errors; 0 skips them.
    pub ame_bootstrap: usize,
    pub level: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Keep only rows whose schema group column equals this value.
    pub group: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            data: None,
            dgp: None,
            schema: None,
            kernel: KernelChoice::Probit,
            utility_correlation: 0.0,
            ghk: GhkConfig::default(),
            quadrature_order: p.quadrature_order,
            optim: p.optim,
            mode: p.mode,
            bootstrap: 1000,
            ame_bootstrap: 0,
            level: 0.05,
            seed: 0,
            threads: None,
            group: None,
        }
    }
}

fn parse_override(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad override key '{key}'")));
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}' descends into a non-table")))?;
    }
    Ok(())
}

impl RunConfig {
    /// Parse TOML text, then apply `key=value` overrides (dotted keys reach nested tables).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            set_path(&mut table, k.trim(), parse_override(v.trim()))?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.dgp) {
            (Some(_), Some(_)) => return Err(Error::Config("set either data or [dgp], not both".into())),
            (Some(_), None) if self.schema.is_none() => {
                return Err(Error::Config("a data file needs a [schema] section".into()))
            }
            _ => {}
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} outside (0,1)", self.level)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let kernel = match self.kernel {
            KernelChoice::Probit => Kernel::Probit {
                ghk: GhkConfig { master_seed: self.seed, ..self.ghk },
                a: self.utility_correlation,
            },
            KernelChoice::Logit => Kernel::Logit,
        };
        PipelineConfig { kernel, quadrature_order: self.quadrature_order, optim: self.optim, mode: self.mode }
    }

    fn dgp_config(&self) -> Result<DgpConfig> {
        let mut d = self.dgp.clone().ok_or_else(|| Error::Config("this command needs a [dgp] section".into()))?;
        d.seed = self.seed;
        Ok(d)
    }

    /// The dataset named by the config: a file, or a fresh simulation. Group filter applied.
    pub fn dataset(&self) -> Result<Dataset> {
        let data = match (&self.data, &self.dgp) {
            (Some(path), _) => load_dataset(path, self.schema.as_ref().expect("validated"))?,
            (None, Some(_)) => simulate_dgp(&self.dgp_config()?)?.0,
            (None, None) => return Err(Error::Config("set data (with [schema]) or [dgp]".into())),
        };
        match &self.group {
            Some(g) => data.filter_group(g),
            None => Ok(data),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "copula-choice", version, about = "Joint choice/outcome copula estimation and the test of rho = 0")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Override a config key (repeatable), e.g. --set optim.max_iter=500.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit first stage, choice model and joint model.
    Fit(Common),
    /// Wald test of rho = 0 from a fresh fit or a saved fit result.
    Test {
        #[command(flatten)]
        common: Common,
        /// A result file written by `fit`; skips refitting.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Average marginal effects for both equations.
    Ame {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Simulate a dataset from [dgp]; truth goes to <out>.truth.json.
    Simulate(Common),
    /// Nonparametric bootstrap over the whole pipeline.
    Bootstrap(Common),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    pub command: String,
    pub status: String,
    pub seed: u64,
    pub config: Option<RunConfig>,
    pub result: Option<T>,
    pub error: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_envelope<T: Serialize>(
    out: &Path,
    command: &str,
    status: &str,
    cfg: Option<&RunConfig>,
    result: Option<T>,
    error: Option<&Error>,
) -> Result<()> {
    let env = Envelope {
        format_version: FORMAT_VERSION,
        command: command.into(),
        status: status.into(),
        seed: cfg.map_or(0, |c| c.seed),
        config: cfg.cloned(),
        result,
        error: error.map(|e| e.to_string()),
    };
    write_json(out, &env)
}

fn configure(common: &Common) -> Result<RunConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = common.threads {
        overrides.push(format!("threads={t}"));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn init_threads(cfg: &RunConfig) {
    let n = cfg.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|&n| n > 0) {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AmeOutput {
    pub outcome: AmeReport,
    pub choice: AmeReport,
}

fn load_fit(path: &Path) -> Result<PipelineFit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let env: Envelope<PipelineFit> =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: not a fit result: {e}", path.display())))?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Input(format!("unsupported format_version {}", env.format_version)));
    }
    env.result.ok_or_else(|| Error::Input(format!("{} holds no fit", path.display())))
}

fn fit_status(fit: &PipelineFit) -> (&'static str, i32) {
    if fit.converged() {
        ("converged", 0)
    } else {
        ("not_converged", EXIT_NOT_CONVERGED)
    }
}

fn cmd_fit(common: &Common) -> Result<i32> {
    let cfg = configure(common)?;
    init_threads(&cfg);
    let fit = run_pipeline(&cfg.dataset()?, &cfg.pipeline())?;
    let (status, code) = fit_status(&fit);
    write_envelope(&common.out, "fit", status, Some(&cfg), Some(&fit), None)?;
    Ok(code)
}

fn cmd_test(common: &Common, result: Option<&Path>, level: Option<f64>) -> Result<i32> {
    let cfg = match (&common.config, result) {
        (None, Some(_)) if common.overrides.is_empty() => None,
        _ => Some(configure(common)?),
    };
    let level = level.or(cfg.as_ref().map(|c| c.level)).unwrap_or(0.05);
    let fit = match result {
        Some(p) => load_fit(p)?,
        None => {
            let cfg = cfg.as_ref().expect("config present without a result file");
            init_threads(cfg);
            run_pipeline(&cfg.dataset()?, &cfg.pipeline())?
        }
    };
    if !fit.converged() {
        return Err(Error::Input("the fit did not converge; the test would not be meaningful".into()));
    }
    let report: TestReport = wald_rho_test(&fit.joint, level)?;
    let (status, code) = if report.reject { ("reject", EXIT_REJECT) } else { ("fail_to_reject", 0) };
    write_envelope(&common.out, "test", status, cfg.as_ref(), Some(&report), None)?;
    Ok(code)
}

fn cmd_ame(common: &Common, result: Option<&Path>) -> Result<i32> {
    let cfg = configure(common)?;
    init_threads(&cfg);
    let data = cfg.dataset()?;
    let pipe = cfg.pipeline();
    let mut fit = match result {
        Some(p) => load_fit(p)?,
        None => run_pipeline(&data, &pipe)?,
    };
    if fit.wage.is_none() {
        fit.wage = match first_stage(&data)? {
            Some((_, w)) => Some(w),
            None => data.wage.clone(),
        };
    }
    let (status, code) = fit_status(&fit);
    let (mut outcome, mut choice) = pipeline_ames(&data, &fit, &pipe)?;
    if cfg.ame_bootstrap >= 2 {
        bootstrap_ames(&data, &pipe, cfg.ame_bootstrap, cfg.seed, &mut outcome, &mut choice)?;
    }
    write_envelope(&common.out, "ame", status, Some(&cfg), Some(AmeOutput { outcome, choice }), None)?;
    Ok(code)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub format_version: u32,
    pub dgp: DgpConfig,
    pub schema: Schema,
    pub truth: TruthRecord,
}

/// Path of the truth file written next to a simulated dataset.
pub fn truth_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".truth.json");
    PathBuf::from(name)
}

fn cmd_simulate(common: &Common) -> Result<i32> {
    let cfg = configure(common)?;
    init_threads(&cfg);
    let dgp = cfg.dgp_config()?;
    let (data, truth) = simulate_dgp(&dgp)?;
    save_dataset(&common.out, &data)?;
    let file = TruthFile { format_version: FORMAT_VERSION, schema: dgp.schema(), dgp, truth };
    write_json(&truth_path(&common.out), &file)?;
    Ok(0)
}

fn cmd_bootstrap(common: &Common) -> Result<i32> {
    let cfg = configure(common)?;
    init_threads(&cfg);
    let data = cfg.dataset()?;
    let boot: BootstrapResult = bootstrap_pipeline(&data, &cfg.pipeline(), cfg.bootstrap, cfg.seed)?;
    let status = if boot.warning.is_some() { "unreliable" } else { "ok" };
    write_envelope(&common.out, "bootstrap", status, Some(&cfg), Some(&boot), None)?;
    Ok(0)
}

/// Run one parsed command and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, common, outcome) = match &cli.command {
        Command::Fit(c) => ("fit", c, cmd_fit(c)),
        Command::Test { common, result, level } => ("test", common, cmd_test(common, result.as_deref(), *level)),
        Command::Ame { common, result } => ("ame", common, cmd_ame(common, result.as_deref())),
        Command::Simulate(c) => ("simulate", c, cmd_simulate(c)),
        Command::Bootstrap(c) => ("bootstrap", c, cmd_bootstrap(c)),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            // The simulate output is a data file, so failures there leave nothing behind.
            if name != "simulate" {
                let cfg = configure(common).ok();
                if let Err(w) = write_envelope::<()>(&common.out, name, "error", cfg.as_ref(), None, Some(&e)) {
                    eprintln!("error: could not write {}: {w}", common.out.display());
                }
            }
            e.exit_code()
        }
    }
}
