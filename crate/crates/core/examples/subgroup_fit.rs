// Fit the same pipeline separately for each value of a group column.

use copula_choice::choice_model::Kernel;
use copula_choice::data_io::{read_dataset, simulate_dgp, write_dataset, DgpConfig};
use copula_choice::pipeline::{run_pipeline, PipelineConfig};
use copula_choice::Result;

fn run() -> Result<()> {
    let dgp = DgpConfig::standard(2000, 3, vec![0.4, 0.0, 0.0], 12);
    let (data, _) = simulate_dgp(&dgp)?;
    // Attach a group column through the CSV layer.
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data)?;
    let text = String::from_utf8(buf).expect("utf8");
    let mut lines = text.lines();
    let mut csv = format!("{},female\n", lines.next().unwrap_or_default());
    for (i, l) in lines.enumerate() {
        csv.push_str(&format!("{l},{}\n", i % 2));
    }
    let mut schema = dgp.schema();
    schema.group = Some("female".into());
    let grouped = read_dataset(csv.as_bytes(), &schema)?;
    let cfg = PipelineConfig { kernel: Kernel::Logit, ..PipelineConfig::default() };
    for g in ["0", "1"] {
        let sub = grouped.filter_group(g)?;
        let fit = run_pipeline(&sub, &cfg)?;
        println!("female = {g}: n = {}, rho = {:.3?}, converged {}", sub.n(), fit.joint.rho(), fit.converged());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
