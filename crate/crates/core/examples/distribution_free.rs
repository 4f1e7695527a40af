// Under independence the covariance between the outcome error and the
// normalized choice error is zero whatever the outcome error's distribution.

use copula_choice::stats_core::RngStream;
use copula_choice::unobs_test::{distribution_free_estimate, EpsDistribution, LatentCovSpec};
use copula_choice::Result;

fn run() -> Result<()> {
    let s = RngStream::new(2, 0);
    let indep = LatentCovSpec { rho_star: vec![0.0; 3], a: 0.3, mean_eps: 0.0, means: vec![0.4, 0.0, -0.2] };
    for eps in [EpsDistribution::Normal, EpsDistribution::CenteredExponential] {
        let (c, se) = distribution_free_estimate(&indep, eps, 300_000, &s)?;
        println!("independent, {eps:?}: {c:.5} ({se:.5})");
    }
    let dep = LatentCovSpec { rho_star: vec![0.5, 0.0, 0.0], ..indep };
    let (c, se) = distribution_free_estimate(&dep, EpsDistribution::Normal, 300_000, &s)?;
    println!("dependent: {c:.5} ({se:.5})");
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
