use interferolab::features::predict;
use interferolab::interferometer::{sample_random_arch, sample_uniform_phases};
use interferolab::programmer::{program_phases, ProgramConfig};
use interferolab::seed::child_rng;
use interferolab::true_weights_from_arch;

#[test]
fn self_generated_targets_are_reached_in_most_trials() {
    let trials = 50;
    let mut reached = 0;
    for t in 0..trials {
        let mut rng = child_rng(500, t);
        let arch = sample_random_arch(3, 4, &mut rng).unwrap();
        let model = true_weights_from_arch(&arch);
        let target = predict(&model, &sample_uniform_phases(3, 4, &mut rng)).unwrap();
        let cfg = ProgramConfig {
            seed: t,
            ..ProgramConfig::default()
        };
        let res = program_phases(&model, &target, &cfg).unwrap();
        assert!(res.final_loss >= 0.0);
        assert!(
            (res.frobenius_loss - res.final_loss / 3.0).abs() <= 1e-15 * res.final_loss.max(1.0)
        );
        if res.final_loss < 1e-8 {
            reached += 1;
        }
    }
    assert!(
        reached * 10 >= trials * 9,
        "{reached}/{trials} targets reached"
    );
}

#[test]
fn programmed_phases_realize_the_target_on_the_model() {
    let mut rng = child_rng(501, 0);
    let arch = sample_random_arch(3, 3, &mut rng).unwrap();
    let model = true_weights_from_arch(&arch);
    let target = predict(&model, &sample_uniform_phases(3, 3, &mut rng)).unwrap();
    let res = program_phases(&model, &target, &ProgramConfig::default()).unwrap();
    let achieved = predict(&model, &res.phases).unwrap();
    let dist: f64 = achieved.sub(&target).unwrap().frobenius_norm_sq();
    assert!((dist - res.final_loss).abs() < 1e-12);
    assert!(res.phases.as_slice().iter().all(|p| p.is_finite()));
}
