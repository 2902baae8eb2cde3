//! Held-out loss against training-set size above the threshold, with a
//! power-law fit per noise level.

use interferolab::experiments::{run_experiment, ExperimentConfig, ExperimentId};

fn main() -> interferolab::Result<()> {
    let mut config = ExperimentConfig::desk(ExperimentId::Fig5);
    config.trials = 20;
    config.seed = 11;
    let result = run_experiment(&config, None)?;

    for (curve, fit) in result.curves.iter().zip(&result.fits) {
        println!("eps = {}", fit.noise_eps);
        for (m, loss) in curve.data.points() {
            println!("  M = {m:>5}  loss {loss:.3e}");
        }
        println!(
            "  loss ~ {:.3} M^-{:.3} (± {:.3})",
            fit.fit.amplitude, fit.fit.exponent, fit.fit.stderr_exponent
        );
        if let Some(x) = fit.excess_fit {
            println!("  against M - N^L: exponent {:.3}", x.exponent);
        }
    }
    Ok(())
}
