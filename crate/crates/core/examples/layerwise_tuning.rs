//! Tunes a simulated 4-mode device layer by layer from noiseless and noisy
//! tomography, printing the loss every 40 passes. A single run can settle in
//! a local minimum; the fig7/fig8 experiments average many.

use interferolab::layerwise::{tune, DeviceOracle, TuneConfig};
use interferolab::seed::rng_from_seed;
use interferolab::{forward_unitary, sample_random_arch, sample_uniform_phases};

fn main() -> interferolab::Result<()> {
    let (n, l) = (4, 5);
    for eps in [0.0, 0.05] {
        let mut rng = rng_from_seed(4);
        let arch = sample_random_arch(n, l, &mut rng)?;
        let target = forward_unitary(&arch, &sample_uniform_phases(n, l, &mut rng))?;
        let mut device = DeviceOracle::new(arch, sample_uniform_phases(n, l, &mut rng), eps)?;
        let cfg = TuneConfig {
            passes: 200,
            seed: 5,
            ..TuneConfig::default()
        };
        let trace = tune(&mut device, &target, &cfg)?;
        println!("eps = {eps}: {} tomography queries", trace.queries);
        println!("  pass    0  loss {:.3e}", trace.initial_loss);
        for r in trace
            .records
            .iter()
            .filter(|r| r.layer == l && (r.pass == 1 || r.pass % 40 == 0))
        {
            println!("  pass {:>4}  loss {:.3e}", r.pass, r.loss);
        }
    }
    Ok(())
}
