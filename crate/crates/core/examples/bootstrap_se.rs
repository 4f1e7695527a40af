// Bootstrap the whole pipeline and set the spread next to the OPG standard errors.

use copula_choice::choice_model::Kernel;
use copula_choice::data_io::{simulate_dgp, DgpConfig};
use copula_choice::inference::bootstrap_pipeline;
use copula_choice::pipeline::{run_pipeline, PipelineConfig};
use copula_choice::Result;

fn run() -> Result<()> {
    let dgp = DgpConfig::standard(800, 3, vec![0.4, 0.0, 0.0], 21);
    let (data, _) = simulate_dgp(&dgp)?;
    let cfg = PipelineConfig { kernel: Kernel::Logit, ..PipelineConfig::default() };
    let fit = run_pipeline(&data, &cfg)?;
    let boot = bootstrap_pipeline(&data, &cfg, 20, 99)?;
    println!("{} replicates, {} failed", boot.replicates, boot.failures);
    let offset = boot.names.len() - fit.joint.names.len();
    for (k, name) in fit.joint.names.iter().enumerate() {
        let (lo, hi) = boot.percentile_ci[offset + k];
        println!(
            "{name:>10} {:>8.4}  opg se {:.4}  bootstrap se {:.4}  95% [{lo:.3}, {hi:.3}]",
            fit.joint.estimates[k], fit.joint.se[k], boot.se[offset + k]
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
