//! Prints the estimator accuracy matrix as JSON lines.

use idlab::bench::{accuracy_matrix, BenchConfig};

fn main() -> idlab::Result<()> {
    let report = accuracy_matrix(&BenchConfig::default())?;
    for c in &report.cases {
        println!("{}", serde_json::to_string(c)?);
    }
    eprintln!(
        "elapsed {:.1}s, all pass: {}",
        report.elapsed_secs,
        report.all_pass()
    );
    Ok(())
}
