//! Oracles shared by the integration tests. Everything here is written
//! independently of the library's own kernels.
#![allow(dead_code)]

use interferolab::interferometer::{Architecture, PhaseConfig};
use interferolab::layerwise::LocalLayerModel;
use interferolab::seed::Rng;
use interferolab::{ComplexMatrix, LinearModel};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-6;

pub fn gaussian(rng: &mut Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Dense Gaussian weights of unit scale per matrix element.
pub fn random_model(n: usize, l: usize, rng: &mut Rng) -> LinearModel {
    let dim = n.pow(l as u32);
    let scale = 1.0 / (dim as f64).sqrt();
    let w = (0..n * n * dim).map(|_| gaussian(rng) * scale).collect();
    LinearModel::from_weights(n, l, "random", w).unwrap()
}

/// Plain triple loop.
pub fn naive_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = ComplexMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// `Φ_L U_{L-1} … U_1 Φ_1` by explicit products with diagonal matrices.
pub fn chain_oracle(arch: &Architecture, phases: &PhaseConfig) -> ComplexMatrix {
    let n = arch.modes();
    let diag = |layer: usize| {
        let mut d = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            d[(k, k)] = Complex64::from_polar(1.0, phases.get(layer, k));
        }
        d
    };
    let mut u = diag(0);
    for (idx, b) in arch.basis().iter().enumerate() {
        u = naive_matmul(&diag(idx + 1), &naive_matmul(b, &u));
    }
    u
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Relative error of `predict_gradient` against central differences of
/// `predict`, over all phases and matrix elements (real and imaginary parts).
pub fn full_model_gradient_error(model: &LinearModel, phases: &PhaseConfig) -> f64 {
    let grad = interferolab::features::predict_gradient(model, phases).unwrap();
    let (l, n) = (phases.layers(), phases.modes());
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for layer in 0..l {
        for p in 0..n {
            let mut plus = phases.clone();
            let mut minus = phases.clone();
            *plus.get_mut(layer, p) += FD_STEP;
            *minus.get_mut(layer, p) -= FD_STEP;
            let up = interferolab::predict(model, &plus).unwrap();
            let um = interferolab::predict(model, &minus).unwrap();
            for (idx, a) in grad.get(layer, p).as_slice().iter().enumerate() {
                let fd = (up.as_slice()[idx] - um.as_slice()[idx]) / (2.0 * FD_STEP);
                analytic.extend([a.re, a.im]);
                numeric.extend([fd.re, fd.im]);
            }
        }
    }
    relative_error(&analytic, &numeric)
}

/// Relative error of the local-layer loss gradient against central
/// differences of the loss.
pub fn local_gradient_error(local: &LocalLayerModel, x: &[f64], target: &ComplexMatrix) -> f64 {
    let (_, g) = local.loss_and_gradient(x, target);
    let fd: Vec<f64> = (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += FD_STEP;
            xm[k] -= FD_STEP;
            (local.loss_and_gradient(&xp, target).0 - local.loss_and_gradient(&xm, target).0)
                / (2.0 * FD_STEP)
        })
        .collect();
    relative_error(&g, &fd)
}

/// Maximum entrywise violation of each of the four Penrose conditions.
pub fn penrose_violations(a: &ComplexMatrix, x: &ComplexMatrix) -> [f64; 4] {
    let ax = naive_matmul(a, x);
    let xa = naive_matmul(x, a);
    [
        max_abs_diff(&naive_matmul(&ax, a), a),
        max_abs_diff(&naive_matmul(&xa, x), x),
        max_abs_diff(&ax.adjoint(), &ax),
        max_abs_diff(&xa.adjoint(), &xa),
    ]
}
