// Average marginal effects of each alternative and covariate on the outcome,
// and of covariates and wages on the choice probabilities.

use copula_choice::choice_model::Kernel;
use copula_choice::data_io::{simulate_dgp, DgpConfig};
use copula_choice::inference::pipeline_ames;
use copula_choice::pipeline::{run_pipeline, PipelineConfig};
use copula_choice::Result;

fn run() -> Result<()> {
    let dgp = DgpConfig::standard(1500, 3, vec![0.3, 0.0, 0.0], 4).with_labor();
    let (data, _) = simulate_dgp(&dgp)?;
    let cfg = PipelineConfig { kernel: Kernel::Logit, ..PipelineConfig::default() };
    let fit = run_pipeline(&data, &cfg)?;
    let (outcome, choice) = pipeline_ames(&data, &fit, &cfg)?;
    println!("outcome effects");
    for (l, e) in outcome.labels.iter().zip(&outcome.effects) {
        println!("  {l:<28} {e:>8.4}");
    }
    println!("choice effects");
    for (l, e) in choice.labels.iter().zip(&choice.effects) {
        println!("  {l:<28} {e:>8.4}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
