//! Learns a model from simulated tomography with the pseudoinverse and with
//! mini-batch gradient descent, then scores both on held-out phases.

use interferolab::seed::rng_from_seed;
use interferolab::trainer::IterativeConfig;
use interferolab::{
    build_design_matrix, generate_training_set, held_out_loss, sample_random_arch,
    sample_uniform_phases, solve_iterative, solve_pinv,
};

fn main() -> interferolab::Result<()> {
    let mut rng = rng_from_seed(2);
    let (n, l) = (2, 3);
    let arch = sample_random_arch(n, l, &mut rng)?;
    let test: Vec<_> = (0..20)
        .map(|_| sample_uniform_phases(n, l, &mut rng))
        .collect();

    for (m, eps) in [(7, 0.0), (16, 0.0), (16, 0.05), (64, 0.05)] {
        let data = generate_training_set(&arch, m, eps, &mut rng)?;
        let design = build_design_matrix(&data)?;
        let (model, report) = solve_pinv(&design, &data)?;
        println!(
            "pinv  M={m:<3} eps={eps:<5} rank {}/{} test loss {:.3e}",
            report.rank_estimate,
            report.feature_dim,
            held_out_loss(&model, &arch, &test)?
        );
    }

    let data = generate_training_set(&arch, 64, 0.0, &mut rng)?;
    let design = build_design_matrix(&data)?;
    let cfg = IterativeConfig {
        epochs: 500,
        ..IterativeConfig::default()
    };
    let (model, report) = solve_iterative(&design, &data, &cfg, None)?;
    println!(
        "sgd   M=64  eps=0     {} epochs, residual rms {:.2e}, test loss {:.3e}",
        report.epochs.unwrap_or(0),
        report.residual_rms,
        held_out_loss(&model, &arch, &test)?
    );
    Ok(())
}
