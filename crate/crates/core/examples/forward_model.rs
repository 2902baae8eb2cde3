//! Builds a random 3-mode, 4-layer interferometer and shows that the path
//! feature model with the architecture's own weights reproduces it.

use interferolab::features::feature_vector;
use interferolab::seed::rng_from_seed;
use interferolab::{
    forward_unitary, predict, sample_random_arch, sample_uniform_phases, true_weights_from_arch,
};

fn main() -> interferolab::Result<()> {
    let mut rng = rng_from_seed(1);
    let arch = sample_random_arch(3, 4, &mut rng)?;
    let phases = sample_uniform_phases(3, 4, &mut rng);

    let u = forward_unitary(&arch, &phases)?;
    println!(
        "architecture {} ({} modes, {} phase layers)",
        &arch.hash()[..12],
        arch.modes(),
        arch.phase_layers()
    );
    println!("max |U^dagger U - I| = {:.2e}", u.unitarity_error());

    let theta = feature_vector(&phases);
    println!(
        "{} path features, first = {:.4}",
        theta.len(),
        theta.as_slice()[0]
    );

    let model = true_weights_from_arch(&arch);
    let diff = predict(&model, &phases)?.max_abs_diff(&u)?;
    println!("max |predict - forward| = {diff:.2e}");
    Ok(())
}
