//! Layer-by-layer tuning of a physical device (alternating least squares).
//!
//! With every layer but `ℓ` frozen, the device is `U = U_L Φ_ℓ U_R`, so
//! `u_ij = Σ_k c_ikj e^{iφ_k}` with `c_ikj = (U_L)_ik (U_R)_kj`. Each visit to
//! a layer fits `c` from fresh tomography of that layer alone, runs a few
//! BFGS steps on the local model, and commits the new phases to the device.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{
    add_tomography_noise, forward_unitary, sample_layer_phases, sample_uniform_phases,
    Architecture, PhaseConfig,
};
use crate::matrix::ComplexMatrix;
use crate::numerics::{bfgs_minimize, pseudoinverse, DEFAULT_RCOND};
use crate::programmer::frobenius_loss;
use crate::seed::{rng_from_seed, Rng};

/// Gradient max-norm below which an ALS step stops early.
const ALS_GRAD_TOL: f64 = 1e-12;

/// Simulated interferometer: a hidden architecture and phase setting that
/// can only be observed through (noisy) tomography.
#[derive(Clone, Debug)]
pub struct DeviceOracle {
    arch: Architecture,
    phases: PhaseConfig,
    noise_eps: f64,
    queries: u64,
    evaluations: u64,
}

impl DeviceOracle {
    pub fn new(arch: Architecture, phases: PhaseConfig, noise_eps: f64) -> Result<Self> {
        arch.check_phases(&phases)?;
        if !(noise_eps.is_finite() && noise_eps >= 0.0) {
            return Err(Error::domain(format!(
                "noise level must be >= 0, got {noise_eps}"
            )));
        }
        Ok(Self {
            arch,
            phases,
            noise_eps,
            queries: 0,
            evaluations: 0,
        })
    }

    pub fn modes(&self) -> usize {
        self.arch.modes()
    }

    pub fn phase_layers(&self) -> usize {
        self.arch.phase_layers()
    }

    pub fn noise_eps(&self) -> f64 {
        self.noise_eps
    }

    /// Tomography calls made so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Noiseless evaluations made so far (not counted as tomography).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn current_phases(&self) -> &PhaseConfig {
        &self.phases
    }

    pub fn set_phases(&mut self, phases: PhaseConfig) -> Result<()> {
        self.arch.check_phases(&phases)?;
        self.phases = phases;
        Ok(())
    }

    /// Measures the transformation at `phases`, with tomography noise.
    pub fn tomography_query(
        &mut self,
        phases: &PhaseConfig,
        rng: &mut Rng,
    ) -> Result<ComplexMatrix> {
        let exact = forward_unitary(&self.arch, phases)?;
        self.queries += 1;
        add_tomography_noise(&exact, self.noise_eps, rng)
    }

    /// Exact transformation at the committed phases.
    pub fn evaluate(&mut self) -> ComplexMatrix {
        self.evaluations += 1;
        forward_unitary(&self.arch, &self.phases).expect("committed phases match the architecture")
    }
}

pub fn tomography_query(
    device: &mut DeviceOracle,
    phases: &PhaseConfig,
    rng: &mut Rng,
) -> Result<ComplexMatrix> {
    device.tomography_query(phases, rng)
}

/// `u_ij = Σ_k c_ikj e^{iφ_k}` for one phase layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLayerModel {
    layer: usize,
    modes: usize,
    coeffs: Vec<Complex64>,
}

impl LocalLayerModel {
    pub fn new(layer: usize, modes: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != modes * modes * modes {
            return Err(Error::shape(format!(
                "{} coefficients for {modes} modes",
                coeffs.len()
            )));
        }
        Ok(Self {
            layer,
            modes,
            coeffs,
        })
    }

    /// 0-based index of the layer this model describes.
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn coeff(&self, i: usize, k: usize, j: usize) -> Complex64 {
        let n = self.modes;
        self.coeffs[(i * n + k) * n + j]
    }

    pub fn predict(&self, layer_phases: &[f64]) -> Result<ComplexMatrix> {
        let n = self.modes;
        if layer_phases.len() != n {
            return Err(Error::shape(format!(
                "{} phases for a {n}-mode layer",
                layer_phases.len()
            )));
        }
        let exps: Vec<Complex64> = layer_phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        Ok(ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| self.coeff(i, k, j) * exps[k]).sum()
        }))
    }

    /// `||U_local(φ) - T||²_F` and its phase gradient
    /// `2 Σ_ij Re[conj(r_ij) i c_ikj e^{iφ_k}]`.
    pub fn loss_and_gradient(
        &self,
        layer_phases: &[f64],
        target: &ComplexMatrix,
    ) -> (f64, Vec<f64>) {
        let n = self.modes;
        let exps: Vec<Complex64> = layer_phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        let mut f = 0.0;
        let mut g = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let u: Complex64 = (0..n).map(|k| self.coeff(i, k, j) * exps[k]).sum();
                let r = u - target[(i, j)];
                f += r.norm_sqr();
                for (k, gk) in g.iter_mut().enumerate() {
                    let du = Complex64::new(0.0, 1.0) * self.coeff(i, k, j) * exps[k];
                    *gk += 2.0 * (r.conj() * du).re;
                }
            }
        }
        (f, g)
    }
}

/// Fits the local model of `layer` (0-based) from `m_samples` tomography
/// queries at random settings of that layer, all other layers held at
/// `current`.
pub fn fit_local_model(
    device: &mut DeviceOracle,
    current: &PhaseConfig,
    layer: usize,
    m_samples: usize,
    rng: &mut Rng,
) -> Result<LocalLayerModel> {
    let n = device.modes();
    if m_samples < n {
        return Err(Error::UnderDetermined {
            samples: m_samples,
            features: n,
        });
    }
    if layer >= device.phase_layers() {
        return Err(Error::shape(format!(
            "layer {layer} out of range for {} layers",
            device.phase_layers()
        )));
    }

    let mut design = Vec::with_capacity(m_samples * n);
    let mut measured = Vec::with_capacity(m_samples);
    for _ in 0..m_samples {
        let layer_phases = sample_layer_phases(n, rng);
        let mut probe = current.clone();
        probe.set_layer(layer, &layer_phases)?;
        measured.push(device.tomography_query(&probe, rng)?);
        design.extend(layer_phases.iter().map(|&p| Complex64::from_polar(1.0, p)));
    }
    let design = ComplexMatrix::from_row_major(m_samples, n, design)?;
    let f = pseudoinverse(&design, DEFAULT_RCOND);

    let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                coeffs[(i * n + k) * n + j] = f
                    .row(k)
                    .iter()
                    .zip(&measured)
                    .map(|(fk, u)| fk * u[(i, j)])
                    .sum();
            }
        }
    }
    LocalLayerModel::new(layer, n, coeffs)
}

/// At most `bfgs_iters` BFGS updates on the local model, starting from the
/// current phases of the layer. Never returns phases with a higher local
/// loss than the start.
pub fn als_step(
    local: &LocalLayerModel,
    current_layer_phases: &[f64],
    target: &ComplexMatrix,
    bfgs_iters: usize,
) -> Result<Vec<f64>> {
    let n = local.modes();
    if current_layer_phases.len() != n || target.shape() != (n, n) {
        return Err(Error::shape(
            "layer phases or target do not match the local model",
        ));
    }
    let (f0, g0) = local.loss_and_gradient(current_layer_phases, target);
    if !f0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        log::warn!(
            "non-finite local gradient on layer {}; keeping phases",
            local.layer() + 1
        );
        return Ok(current_layer_phases.to_vec());
    }
    let res = bfgs_minimize(
        |x: &[f64]| local.loss_and_gradient(x, target),
        current_layer_phases,
        bfgs_iters,
        ALS_GRAD_TOL,
    );
    if res.f.is_finite() && res.f <= f0 && res.x.iter().all(|x| x.is_finite()) {
        Ok(res.x)
    } else {
        Ok(current_layer_phases.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub passes: usize,
    /// `None` selects `N + 1` for a noiseless device and `10 N` otherwise.
    pub m_samples_per_layer: Option<usize>,
    pub bfgs_iters: usize,
    pub seed: u64,
    pub initial_phases: Option<PhaseConfig>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            passes: 1000,
            m_samples_per_layer: None,
            bfgs_iters: 5,
            seed: 0,
            initial_phases: None,
        }
    }
}

impl TuneConfig {
    pub fn samples_for(&self, modes: usize, noise_eps: f64) -> usize {
        self.m_samples_per_layer.unwrap_or(if noise_eps == 0.0 {
            modes + 1
        } else {
            10 * modes
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based pass number.
    pub pass: usize,
    /// 1-based layer number (layer 1 is on the input side).
    pub layer: usize,
    /// 1-based count of layer updates so far.
    pub iteration: usize,
    /// Noiseless `(1/N)||U_device - U_target||²` after the update.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub initial_loss: f64,
    pub records: Vec<TraceRecord>,
    pub final_phases: PhaseConfig,
    pub final_loss: f64,
    pub queries: u64,
}

/// Full ALS loop: for every pass, visit layers 1..L in order.
pub fn tune(
    device: &mut DeviceOracle,
    target: &ComplexMatrix,
    config: &TuneConfig,
) -> Result<TuneTrace> {
    let (n, l) = (device.modes(), device.phase_layers());
    if target.shape() != (n, n) {
        return Err(Error::shape(format!(
            "target is {}x{}, device has {n} modes",
            target.rows(),
            target.cols()
        )));
    }
    let m = config.samples_for(n, device.noise_eps());
    let mut rng = rng_from_seed(config.seed);
    let mut current = match &config.initial_phases {
        Some(p) => p.clone(),
        None => sample_uniform_phases(n, l, &mut rng),
    };
    device.set_phases(current.clone())?;
    let initial_loss = frobenius_loss(&device.evaluate(), target)?;
    let queries_before = device.queries();

    let mut records = Vec::with_capacity(config.passes * l);
    let mut loss = initial_loss;
    for pass in 0..config.passes {
        for layer in 0..l {
            let local = fit_local_model(device, &current, layer, m, &mut rng)?;
            let updated = als_step(&local, current.layer(layer), target, config.bfgs_iters)?;
            current.set_layer(layer, &updated)?;
            device.set_phases(current.clone())?;
            loss = frobenius_loss(&device.evaluate(), target)?;
            records.push(TraceRecord {
                pass: pass + 1,
                layer: layer + 1,
                iteration: pass * l + layer + 1,
                loss,
            });
        }
    }

    Ok(TuneTrace {
        initial_loss,
        records,
        final_phases: current,
        final_loss: loss,
        queries: device.queries() - queries_before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::sample_random_arch;

    fn device(n: usize, l: usize, eps: f64, seed: u64) -> (DeviceOracle, Rng) {
        let mut rng = rng_from_seed(seed);
        let arch = sample_random_arch(n, l, &mut rng).unwrap();
        let phases = sample_uniform_phases(n, l, &mut rng);
        (DeviceOracle::new(arch, phases, eps).unwrap(), rng)
    }

    #[test]
    fn noiseless_queries_are_exact_and_counted() {
        let (mut dev, mut rng) = device(3, 3, 0.0, 1);
        let p = sample_uniform_phases(3, 3, &mut rng);
        let a = dev.tomography_query(&p, &mut rng).unwrap();
        let b = tomography_query(&mut dev, &p, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, forward_unitary(&dev.arch, &p).unwrap());
        assert_eq!(dev.queries(), 2);
        dev.evaluate();
        assert_eq!(dev.queries(), 2);
        assert_eq!(dev.evaluations(), 1);
        assert!(dev
            .tomography_query(&PhaseConfig::zeros(2, 3), &mut rng)
            .is_err());
    }

    #[test]
    fn noisy_queries_have_eps_squared_power() {
        let eps = 0.05;
        let (mut dev, mut rng) = device(4, 3, eps, 2);
        let p = sample_uniform_phases(4, 3, &mut rng);
        let exact = forward_unitary(&dev.arch, &p).unwrap();
        let queries = 2000;
        let power: f64 = (0..queries)
            .map(|_| {
                dev.tomography_query(&p, &mut rng)
                    .unwrap()
                    .sub(&exact)
                    .unwrap()
                    .frobenius_norm_sq()
            })
            .sum::<f64>()
            / (queries as f64 * 16.0);
        assert!((power / (eps * eps) - 1.0).abs() < 0.05, "power {power}");
    }

    #[test]
    fn local_model_predicts_fresh_settings() {
        let (mut dev, mut rng) = device(4, 4, 0.0, 3);
        let current = dev.current_phases().clone();
        for layer in 0..4 {
            let before = dev.queries();
            let local = fit_local_model(&mut dev, &current, layer, 5, &mut rng).unwrap();
            assert_eq!(dev.queries() - before, 5);
            for _ in 0..5 {
                let lp = sample_layer_phases(4, &mut rng);
                let mut probe = current.clone();
                probe.set_layer(layer, &lp).unwrap();
                let truth = forward_unitary(&dev.arch, &probe).unwrap();
                let pred = local.predict(&lp).unwrap();
                assert!(frobenius_loss(&pred, &truth).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn diagonal_device_has_diagonal_coefficients() {
        let arch = Architecture::new(3, vec![ComplexMatrix::identity(3)]).unwrap();
        let mut rng = rng_from_seed(4);
        let phases = sample_uniform_phases(3, 2, &mut rng);
        let mut dev = DeviceOracle::new(arch, phases.clone(), 0.0).unwrap();
        let local = fit_local_model(&mut dev, &phases, 0, 4, &mut rng).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    if !(k == j && i == j) {
                        assert!(local.coeff(i, k, j).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn under_determined_fit_is_rejected() {
        let (mut dev, mut rng) = device(3, 3, 0.0, 5);
        let current = dev.current_phases().clone();
        let err = fit_local_model(&mut dev, &current, 0, 2, &mut rng);
        assert!(matches!(
            err,
            Err(Error::UnderDetermined {
                samples: 2,
                features: 3
            })
        ));
    }

    #[test]
    fn local_gradient_matches_finite_differences() {
        let (mut dev, mut rng) = device(3, 3, 0.0, 6);
        let current = dev.current_phases().clone();
        let local = fit_local_model(&mut dev, &current, 1, 4, &mut rng).unwrap();
        let target = crate::interferometer::sample_haar_unitary(3, &mut rng).unwrap();
        let x = sample_layer_phases(3, &mut rng);
        let (_, g) = local.loss_and_gradient(&x, &target);
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (local.loss_and_gradient(&xp, &target).0
                - local.loss_and_gradient(&xm, &target).0)
                / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3));
        }
    }

    #[test]
    fn als_step_descends_and_respects_stationary_start() {
        let (mut dev, mut rng) = device(3, 3, 0.0, 7);
        let current = dev.current_phases().clone();
        let local = fit_local_model(&mut dev, &current, 2, 4, &mut rng).unwrap();

        let star = sample_layer_phases(3, &mut rng);
        let target = local.predict(&star).unwrap();
        let out = als_step(&local, &star, &target, 5).unwrap();
        for (a, b) in out.iter().zip(&star) {
            assert!((a - b).abs() < 1e-10);
        }

        let other = crate::interferometer::sample_haar_unitary(3, &mut rng).unwrap();
        for _ in 0..10 {
            let start = sample_layer_phases(3, &mut rng);
            let before = local.loss_and_gradient(&start, &other).0;
            let out = als_step(&local, &start, &other, 5).unwrap();
            assert!(local.loss_and_gradient(&out, &other).0 <= before);
        }
    }

    #[test]
    fn tuned_device_stays_tuned() {
        let (mut dev, _) = device(3, 4, 0.0, 8);
        let initial = dev.current_phases().clone();
        let target = dev.evaluate();
        let cfg = TuneConfig {
            passes: 20,
            initial_phases: Some(initial),
            ..TuneConfig::default()
        };
        let trace = tune(&mut dev, &target, &cfg).unwrap();
        assert_eq!(trace.initial_loss, 0.0);
        assert_eq!(trace.records.len(), 20 * 4);
        assert!(trace.records.iter().all(|r| r.loss < 1e-12));
        assert_eq!(trace.queries, 20 * 4 * 4);
    }

    #[test]
    fn noiseless_tuning_is_monotone_and_accounted() {
        let (mut dev, mut rng) = device(3, 4, 0.0, 9);
        let arch = dev.arch.clone();
        let target = forward_unitary(&arch, &sample_uniform_phases(3, 4, &mut rng)).unwrap();
        let cfg = TuneConfig {
            passes: 50,
            seed: 3,
            ..TuneConfig::default()
        };
        let trace = tune(&mut dev, &target, &cfg).unwrap();
        assert_eq!(trace.records.len(), 50 * 4);
        assert_eq!(trace.queries, 50 * 4 * 4);
        let mut prev = trace.initial_loss;
        for r in &trace.records {
            assert!(
                r.loss <= prev + 1e-12,
                "loss rose from {prev:e} to {:e}",
                r.loss
            );
            prev = r.loss;
        }
        assert!(trace.final_loss < trace.initial_loss);
    }
}
