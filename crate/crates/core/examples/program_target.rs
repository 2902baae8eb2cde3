//! Programs a learned model toward a target generated by the device and
//! toward a Haar-random one, then checks the phases on the device itself.

use interferolab::seed::rng_from_seed;
use interferolab::{
    build_design_matrix, forward_unitary, frobenius_loss, generate_training_set, program_phases,
    sample_haar_unitary, sample_random_arch, sample_uniform_phases, solve_pinv, ProgramConfig,
};

fn main() -> interferolab::Result<()> {
    let mut rng = rng_from_seed(3);
    let arch = sample_random_arch(3, 4, &mut rng)?;
    let data = generate_training_set(&arch, 162, 0.0, &mut rng)?;
    let (model, _) = solve_pinv(&build_design_matrix(&data)?, &data)?;

    let reachable = forward_unitary(&arch, &sample_uniform_phases(3, 4, &mut rng))?;
    let res = program_phases(&model, &reachable, &ProgramConfig::default())?;
    let on_device = forward_unitary(&arch, &res.phases)?;
    println!(
        "reachable target: model loss {:.2e}, device loss {:.2e}, converged {}",
        res.frobenius_loss,
        frobenius_loss(&on_device, &reachable)?,
        res.converged
    );

    let haar = sample_haar_unitary(3, &mut rng)?;
    let res = program_phases(
        &model,
        &haar,
        &ProgramConfig {
            restarts: 10,
            ..ProgramConfig::default()
        },
    )?;
    println!(
        "Haar-random target: best model loss {:.3e} after {} restarts",
        res.frobenius_loss, res.restarts_used
    );
    Ok(())
}
