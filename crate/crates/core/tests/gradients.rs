mod common;

use interferolab::interferometer::{
    sample_haar_unitary, sample_random_arch, sample_uniform_phases,
};
use interferolab::layerwise::{fit_local_model, DeviceOracle};
use interferolab::seed::{child_rng, rng_from_seed};
use interferolab::true_weights_from_arch;

use common::{full_model_gradient_error, local_gradient_error, random_model};

#[test]
fn dense_model_gradient_matches_central_differences() {
    for case in 0..50u64 {
        let mut rng = child_rng(101, case);
        let n = 2 + (case % 3) as usize;
        let l = 2 + ((case / 3) % 3) as usize;
        let model = random_model(n, l, &mut rng);
        let phases = sample_uniform_phases(n, l, &mut rng);
        let err = full_model_gradient_error(&model, &phases);
        assert!(
            err < 1e-6,
            "case {case} (N={n}, L={l}): relative error {err:e}"
        );
    }
}

#[test]
fn structured_model_gradient_matches_central_differences() {
    for case in 0..20u64 {
        let mut rng = child_rng(102, case);
        let arch = sample_random_arch(3, 4, &mut rng).unwrap();
        let model = true_weights_from_arch(&arch);
        let phases = sample_uniform_phases(3, 4, &mut rng);
        let err = full_model_gradient_error(&model, &phases);
        assert!(err < 1e-6, "case {case}: relative error {err:e}");
    }
}

#[test]
fn local_layer_gradient_matches_central_differences() {
    for case in 0..50u64 {
        let mut rng = child_rng(103, case);
        let n = 2 + (case % 4) as usize;
        let l = 2 + (case % 3) as usize;
        let arch = sample_random_arch(n, l, &mut rng).unwrap();
        let current = sample_uniform_phases(n, l, &mut rng);
        let mut device = DeviceOracle::new(arch, current.clone(), 0.0).unwrap();
        let layer = (case as usize) % l;
        let local = fit_local_model(&mut device, &current, layer, n + 1, &mut rng).unwrap();
        let target = sample_haar_unitary(n, &mut rng).unwrap();
        let x = sample_uniform_phases(n, 1, &mut rng).as_slice().to_vec();
        let err = local_gradient_error(&local, &x, &target);
        assert!(err < 1e-6, "case {case}: relative error {err:e}");
    }
}

#[test]
fn noisy_local_model_gradient_is_still_exact_for_its_own_loss() {
    let mut rng = rng_from_seed(104);
    let arch = sample_random_arch(4, 3, &mut rng).unwrap();
    let current = sample_uniform_phases(4, 3, &mut rng);
    let mut device = DeviceOracle::new(arch, current.clone(), 0.1).unwrap();
    let local = fit_local_model(&mut device, &current, 1, 40, &mut rng).unwrap();
    let target = sample_haar_unitary(4, &mut rng).unwrap();
    let x = sample_uniform_phases(4, 1, &mut rng).as_slice().to_vec();
    assert!(local_gradient_error(&local, &x, &target) < 1e-6);
}
