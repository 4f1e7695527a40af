// Re-estimate the choice coefficients jointly with the outcome equation,
// starting from the two-step solution.

use copula_choice::choice_model::Kernel;
use copula_choice::data_io::{simulate_dgp, DgpConfig};
use copula_choice::joint_model::FitMode;
use copula_choice::pipeline::{run_pipeline, PipelineConfig};
use copula_choice::Result;

fn run() -> Result<()> {
    let dgp = DgpConfig::standard(1000, 3, vec![0.5, 0.0, 0.0], 17);
    let (data, _) = simulate_dgp(&dgp)?;
    let two = PipelineConfig { kernel: Kernel::Logit, ..PipelineConfig::default() };
    let full = PipelineConfig { mode: FitMode::Full, ..two };
    let a = run_pipeline(&data, &two)?;
    let b = run_pipeline(&data, &full)?;
    println!("two-step rho {:.3?}  loglik {:.2}", a.joint.rho(), a.joint.loglik);
    println!("full     rho {:.3?}  loglik {:.2}", b.joint.rho(), b.joint.loglik);
    for (k, name) in b.joint.names.iter().enumerate().take(4) {
        println!("{name:>12} {:.4} ({:.4})", b.joint.estimates[k], b.joint.se[k]);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
