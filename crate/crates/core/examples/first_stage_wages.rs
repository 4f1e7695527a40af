// Earnings and hours regressions with alternative dummies, and the
// normalized wage every individual would expect under each alternative.

use copula_choice::data_io::{simulate_dgp, DgpConfig};
use copula_choice::pipeline::first_stage;
use copula_choice::Result;

fn run() -> Result<()> {
    let dgp = DgpConfig::standard(3000, 3, vec![0.0; 3], 8).with_labor();
    let (data, truth) = simulate_dgp(&dgp)?;
    let Some((fs, wage)) = first_stage(&data)? else {
        return Ok(());
    };
    let truth_kappa = &dgp.labor.as_ref().expect("labor block").earnings_kappa;
    println!("earnings dummies {:.3?} (truth {truth_kappa:?})", fs.earnings.kappa);
    println!("hours dummies    {:.3?}", fs.hours.kappa);
    for i in 0..3 {
        println!("row {i}: predicted wage {:.3?}  true {:.3?}", wage.row(i), truth.wage.row(i));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
