// Multinomial probit choice probabilities by GHK next to the logit closed form.

use copula_choice::ghk::{ghk_rectangle_estimate, differenced_covariance, mnl_choice_prob, GhkConfig, MnpKernel, UtilitySpec};
use copula_choice::stats_core::{cholesky, Matrix};
use copula_choice::Result;

fn run() -> Result<()> {
    let v = [0.4, -0.2, 0.1, 0.0];
    let kernel = MnpKernel::exchangeable(4, 0.3)?;
    let cfg = GhkConfig::default();
    let mut total = 0.0;
    for c in 0..4 {
        let p = kernel.prob(&v, c, &cfg, &cfg.stream_for(0));
        let logit = mnl_choice_prob(&UtilitySpec::new(v.to_vec(), c, Matrix::identity(4))?);
        println!("alternative {}: probit {p:.4}  logit {logit:.4}", c + 1);
        total += p;
    }
    println!("probit total {total:.6}");

    // The same number from the raw rectangle, with its simulation error.
    let sigma = kernel.sigma().clone();
    let d = differenced_covariance(&sigma, 0);
    let bounds: Vec<f64> = (1..4).map(|k| v[0] - v[k]).collect();
    let (p, se) = ghk_rectangle_estimate(&bounds, &cholesky(&d)?, &GhkConfig { num_draws: 5000, ..cfg }, &cfg.stream_for(0))?;
    println!("alternative 1 with 5000 draws: {p:.4} (MC se {se:.5})");
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
