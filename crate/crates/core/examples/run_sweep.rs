//! Runs any experiment at desk scale and writes its CSV and metadata files.
//!
//! cargo run --release --example run_sweep -- fig6 out/

use interferolab::experiments::{run_experiment, write_outputs, ExperimentConfig, ExperimentId};

fn main() -> interferolab::Result<()> {
    let mut args = std::env::args().skip(1);
    let id: ExperimentId = args.next().as_deref().unwrap_or("fig6").parse()?;
    let out = args.next().unwrap_or_else(|| "results".into());

    let config = ExperimentConfig::desk(id);
    let result = run_experiment(&config, None)?;
    for path in write_outputs(&result, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}
