//! The direct-vs-aligned averaging ablation over a few seeds. Pass a seed
//! count as the first argument to run more.

use otfuse::experiment::{run_experiment, ExperimentConfig};
use otfuse::report::OutputFormat;

pub fn run_example_with(num_seeds: u64) -> otfuse::Result<()> {
    let cfg = ExperimentConfig {
        seeds: (0..num_seeds).collect(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    print!("{}", report.render(OutputFormat::Text));
    Ok(())
}

pub fn run_example() -> otfuse::Result<()> {
    run_example_with(2)
}

#[allow(dead_code)]
fn main() {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    run_example_with(n).expect("ablation_experiment example failed");
}
