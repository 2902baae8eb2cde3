//! The layered interferometer model `U = Φ_L U_{L-1} ... U_1 Φ_1`.
//!
//! Phase layers are numbered from the input side: layer 1 is applied first
//! and is stored first. Phases are kept unreduced (no wrapping mod 2π).

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::seed::Rng;

/// Tolerance on `max |U^dagger U - I|` for accepted basis matrices.
pub const BASIS_UNITARITY_TOL: f64 = 1e-10;

/// The `L x N` array of phase shifts, layer 1 first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PhaseConfig {
    layers: usize,
    modes: usize,
    values: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(layers: usize, modes: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || modes == 0 {
            return Err(Error::shape(format!("empty {layers}x{modes} phase config")));
        }
        if values.len() != layers * modes {
            return Err(Error::shape(format!(
                "{} phases for {layers} layers of {modes} modes",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phases"));
        }
        Ok(Self {
            layers,
            modes,
            values,
        })
    }

    pub fn zeros(layers: usize, modes: usize) -> Self {
        Self {
            layers,
            modes,
            values: vec![0.0; layers * modes],
        }
    }

    pub fn from_layers(layers: &[Vec<f64>]) -> Result<Self> {
        let modes = layers.first().map_or(0, Vec::len);
        if layers.iter().any(|l| l.len() != modes) {
            return Err(Error::shape("ragged phase layers"));
        }
        Self::new(layers.len(), modes, layers.concat())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Phases of layer `layer` (0-based, so `0` is the input-side layer).
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.values[layer * self.modes..(layer + 1) * self.modes]
    }

    pub fn set_layer(&mut self, layer: usize, phases: &[f64]) -> Result<()> {
        if layer >= self.layers || phases.len() != self.modes {
            return Err(Error::shape(format!(
                "layer {layer} with {} phases for a {}x{} config",
                phases.len(),
                self.layers,
                self.modes
            )));
        }
        if phases.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phases"));
        }
        self.values[layer * self.modes..(layer + 1) * self.modes].copy_from_slice(phases);
        Ok(())
    }

    pub fn get(&self, layer: usize, mode: usize) -> f64 {
        self.values[layer * self.modes + mode]
    }

    pub fn get_mut(&mut self, layer: usize, mode: usize) -> &mut f64 {
        &mut self.values[layer * self.modes + mode]
    }

    /// `e^{i φ}` for every phase of one layer.
    pub fn layer_exponentials(&self, layer: usize) -> Vec<Complex64> {
        self.layer(layer)
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect()
    }

    /// Copy with every phase wrapped into `[0, 2π)`, for display only.
    pub fn wrapped(&self) -> Self {
        Self {
            layers: self.layers,
            modes: self.modes,
            values: self.values.iter().map(|v| v.rem_euclid(TAU)).collect(),
        }
    }

    pub fn to_layers(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.modes)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PhaseConfig {
    type Error = Error;

    fn try_from(layers: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_layers(&layers)
    }
}

impl From<PhaseConfig> for Vec<Vec<f64>> {
    fn from(p: PhaseConfig) -> Self {
        p.to_layers()
    }
}

/// Mode count, phase-layer count and the fixed mixing matrices between
/// consecutive phase layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureFile", into = "ArchitectureFile")]
pub struct Architecture {
    modes: usize,
    basis: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
struct ArchitectureFile {
    modes: usize,
    phase_layers: usize,
    basis: Vec<ComplexMatrix>,
}

impl TryFrom<ArchitectureFile> for Architecture {
    type Error = Error;

    fn try_from(f: ArchitectureFile) -> Result<Self> {
        if f.phase_layers != f.basis.len() + 1 {
            return Err(Error::shape(format!(
                "{} phase layers need {} basis matrices, found {}",
                f.phase_layers,
                f.phase_layers.saturating_sub(1),
                f.basis.len()
            )));
        }
        Architecture::new(f.modes, f.basis)
    }
}

impl From<Architecture> for ArchitectureFile {
    fn from(a: Architecture) -> Self {
        ArchitectureFile {
            modes: a.modes,
            phase_layers: a.phase_layers(),
            basis: a.basis,
        }
    }
}

impl Architecture {
    /// `basis[0]` is `U_1`, the mixer right after the first phase layer.
    pub fn new(modes: usize, basis: Vec<ComplexMatrix>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::domain("an interferometer needs at least one mode"));
        }
        if basis.is_empty() {
            return Err(Error::domain(
                "at least one basis matrix (two phase layers) is required",
            ));
        }
        for (idx, b) in basis.iter().enumerate() {
            if b.shape() != (modes, modes) {
                return Err(Error::shape(format!(
                    "basis matrix {} is {}x{}, expected {modes}x{modes}",
                    idx + 1,
                    b.rows(),
                    b.cols()
                )));
            }
            let err = b.unitarity_error();
            if err.is_nan() || err >= BASIS_UNITARITY_TOL {
                return Err(Error::domain(format!(
                    "basis matrix {} is not unitary (max |U^dagger U - I| = {err:e})",
                    idx + 1
                )));
            }
        }
        Ok(Self { modes, basis })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn phase_layers(&self) -> usize {
        self.basis.len() + 1
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    /// SHA-256 over the little-endian encoding of `modes`, `phase_layers`
    /// and every basis entry (re, im), as lowercase hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.modes as u64).to_le_bytes());
        h.update((self.phase_layers() as u64).to_le_bytes());
        for b in &self.basis {
            for z in b.as_slice() {
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn check_phases(&self, phases: &PhaseConfig) -> Result<()> {
        if phases.layers() != self.phase_layers() || phases.modes() != self.modes {
            return Err(Error::shape(format!(
                "phase config is {}x{}, architecture expects {}x{}",
                phases.layers(),
                phases.modes(),
                self.phase_layers(),
                self.modes
            )));
        }
        Ok(())
    }
}

/// Evaluates `Φ_L U_{L-1} ... U_1 Φ_1`.
pub fn forward_unitary(arch: &Architecture, phases: &PhaseConfig) -> Result<ComplexMatrix> {
    arch.check_phases(phases)?;
    let mut u = ComplexMatrix::from_diagonal(&phases.layer_exponentials(0));
    for (layer, mixer) in arch.basis().iter().enumerate() {
        u = mixer.matmul(&u)?;
        u.scale_rows(&phases.layer_exponentials(layer + 1));
    }
    Ok(u)
}

/// Adds i.i.d. complex Gaussian noise `(eps/√2)(x + iy)` to every entry.
/// With `eps == 0` the input is returned unchanged and no randomness is drawn.
pub fn add_tomography_noise(u: &ComplexMatrix, eps: f64, rng: &mut Rng) -> Result<ComplexMatrix> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::domain(format!(
            "noise level must be finite and >= 0, got {eps}"
        )));
    }
    let mut out = u.clone();
    if eps == 0.0 {
        return Ok(out);
    }
    let scale = eps / std::f64::consts::SQRT_2;
    for z in out.as_mut_slice() {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        *z += Complex64::new(scale * x, scale * y);
    }
    Ok(out)
}

/// Haar-uniform `n x n` unitary: QR of a complex Ginibre matrix with the
/// columns of `Q` rephased by `r_jj / |r_jj|`.
pub fn sample_haar_unitary(n: usize, rng: &mut Rng) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::domain("unitary dimension must be >= 1"));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = nalgebra::DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        Complex64::new(scale * x, scale * y)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 {
            d / norm
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(ComplexMatrix::from_nalgebra(&q))
}

/// `l - 1` independent Haar-random basis matrices on `n` modes.
pub fn sample_random_arch(n: usize, l: usize, rng: &mut Rng) -> Result<Architecture> {
    if l < 2 {
        return Err(Error::domain(format!(
            "need at least 2 phase layers, got {l}"
        )));
    }
    let basis = (0..l - 1)
        .map(|_| sample_haar_unitary(n, rng))
        .collect::<Result<Vec<_>>>()?;
    Architecture::new(n, basis)
}

/// Every phase i.i.d. uniform on `[0, 2π)`.
pub fn sample_uniform_phases(n: usize, l: usize, rng: &mut Rng) -> PhaseConfig {
    let dist = Uniform::new(0.0, TAU).expect("valid range");
    let values = (0..n * l).map(|_| dist.sample(rng)).collect();
    PhaseConfig {
        layers: l,
        modes: n,
        values,
    }
}

/// Uniform `[0, 2π)` phases for a single layer of `n` modes.
pub(crate) fn sample_layer_phases(n: usize, rng: &mut Rng) -> Vec<f64> {
    let dist = Uniform::new(0.0, TAU).expect("valid range");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub phases: PhaseConfig,
    pub matrix: ComplexMatrix,
}

/// Tomography data `(φ^(m), U^(m))` for one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrainingSetFile", into = "TrainingSetFile")]
pub struct TrainingSet {
    architecture_hash: String,
    noise_eps: f64,
    samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct TrainingSetFile {
    architecture_hash: String,
    noise_eps: f64,
    samples: Vec<Sample>,
}

impl TryFrom<TrainingSetFile> for TrainingSet {
    type Error = Error;

    fn try_from(f: TrainingSetFile) -> Result<Self> {
        TrainingSet::new(f.architecture_hash, f.noise_eps, f.samples)
    }
}

impl From<TrainingSet> for TrainingSetFile {
    fn from(t: TrainingSet) -> Self {
        TrainingSetFile {
            architecture_hash: t.architecture_hash,
            noise_eps: t.noise_eps,
            samples: t.samples,
        }
    }
}

impl TrainingSet {
    pub fn new(architecture_hash: String, noise_eps: f64, samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::domain("training set is empty"))?;
        if noise_eps.is_nan() || noise_eps < 0.0 {
            return Err(Error::domain(format!(
                "noise level {noise_eps} is negative"
            )));
        }
        let (layers, modes) = (first.phases.layers(), first.phases.modes());
        for (idx, s) in samples.iter().enumerate() {
            if s.phases.layers() != layers
                || s.phases.modes() != modes
                || s.matrix.shape() != (modes, modes)
            {
                return Err(Error::shape(format!(
                    "sample {idx} does not match {layers} layers x {modes} modes"
                )));
            }
        }
        Ok(Self {
            architecture_hash,
            noise_eps,
            samples,
        })
    }

    pub fn architecture_hash(&self) -> &str {
        &self.architecture_hash
    }

    pub fn noise_eps(&self) -> f64 {
        self.noise_eps
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.samples[0].phases.modes()
    }

    pub fn phase_layers(&self) -> usize {
        self.samples[0].phases.layers()
    }
}

/// `m` uniformly random phase settings with their (noisy) transformations.
pub fn generate_training_set(
    arch: &Architecture,
    m: usize,
    eps: f64,
    rng: &mut Rng,
) -> Result<TrainingSet> {
    if m < 1 {
        return Err(Error::domain("training set size must be >= 1"));
    }
    let samples = (0..m)
        .map(|_| {
            let phases = sample_uniform_phases(arch.modes(), arch.phase_layers(), rng);
            let exact = forward_unitary(arch, &phases)?;
            let matrix = add_tomography_noise(&exact, eps, rng)?;
            Ok(Sample { phases, matrix })
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::new(arch.hash(), eps, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn identity_arch(n: usize, l: usize) -> Architecture {
        Architecture::new(n, vec![ComplexMatrix::identity(n); l - 1]).unwrap()
    }

    /// Naive oracle: materialize every factor and multiply the chain.
    fn chain_product(arch: &Architecture, phases: &PhaseConfig) -> ComplexMatrix {
        let diag = |l: usize| ComplexMatrix::from_diagonal(&phases.layer_exponentials(l));
        let mut factors = vec![diag(0)];
        for (l, b) in arch.basis().iter().enumerate() {
            factors.push(b.clone());
            factors.push(diag(l + 1));
        }
        factors
            .into_iter()
            .reduce(|acc, f| f.matmul(&acc).unwrap())
            .unwrap()
    }

    #[test]
    fn identity_case() {
        let arch = identity_arch(2, 2);
        let u = forward_unitary(&arch, &PhaseConfig::zeros(2, 2)).unwrap();
        assert_eq!(u, ComplexMatrix::identity(2));
    }

    #[test]
    fn diagonal_phase_product() {
        let arch = identity_arch(2, 2);
        let phases = PhaseConfig::from_layers(&[vec![FRAC_PI_2, 0.0], vec![0.0, 0.0]]).unwrap();
        let u = forward_unitary(&arch, &phases).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[c(0.0, 1.0), c(1.0, 0.0)]);
        assert!(u.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn random_instance_matches_chain_oracle() {
        let mut rng = rng_from_seed(11);
        let arch = sample_random_arch(3, 4, &mut rng).unwrap();
        let phases = sample_uniform_phases(3, 4, &mut rng);
        let u = forward_unitary(&arch, &phases).unwrap();
        assert!(u.max_abs_diff(&chain_product(&arch, &phases)).unwrap() < 1e-13);
        assert!(u.unitarity_error() < 1e-12);
    }

    #[test]
    fn two_layer_triple_product() {
        let mut rng = rng_from_seed(3);
        let arch = sample_random_arch(4, 2, &mut rng).unwrap();
        let phases = sample_uniform_phases(4, 2, &mut rng);
        let p1 = ComplexMatrix::from_diagonal(&phases.layer_exponentials(0));
        let p2 = ComplexMatrix::from_diagonal(&phases.layer_exponentials(1));
        let oracle = p2.matmul(&arch.basis()[0]).unwrap().matmul(&p1).unwrap();
        let u = forward_unitary(&arch, &phases).unwrap();
        assert!(u.max_abs_diff(&oracle).unwrap() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let arch = identity_arch(2, 3);
        assert!(matches!(
            forward_unitary(&arch, &PhaseConfig::zeros(2, 2)),
            Err(Error::Shape(_))
        ));
        assert!(Architecture::new(2, vec![]).is_err());
        assert!(Architecture::new(2, vec![ComplexMatrix::identity(3)]).is_err());
        let not_unitary = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(Architecture::new(2, vec![not_unitary]).is_err());
    }

    #[test]
    fn noise_zero_is_bitwise_identity_and_negative_rejected() {
        let mut rng = rng_from_seed(1);
        let u = sample_haar_unitary(3, &mut rng).unwrap();
        assert_eq!(add_tomography_noise(&u, 0.0, &mut rng).unwrap(), u);
        assert!(matches!(
            add_tomography_noise(&u, -0.1, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let u = ComplexMatrix::identity(3);
        let a = add_tomography_noise(&u, 0.3, &mut rng_from_seed(5)).unwrap();
        let b = add_tomography_noise(&u, 0.3, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, u);
    }

    #[test]
    fn noise_power_matches_eps_squared() {
        // 10^6 entries at eps = 0.1: E|δ|^2 = 0.01, and the sample mean has
        // standard error 1e-5.
        let u = ComplexMatrix::zeros(1000, 1000);
        let noisy = add_tomography_noise(&u, 0.1, &mut rng_from_seed(2024)).unwrap();
        let mean = noisy.frobenius_norm_sq() / 1e6;
        assert!((0.0099..=0.0101).contains(&mean), "mean |δ|^2 = {mean}");
    }

    #[test]
    fn haar_one_by_one_is_a_phase() {
        let q = sample_haar_unitary(1, &mut rng_from_seed(9)).unwrap();
        assert!((q[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(sample_haar_unitary(0, &mut rng_from_seed(9)).is_err());
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = rng_from_seed(4);
        for n in [2, 4, 7] {
            assert!(sample_haar_unitary(n, &mut rng).unwrap().unitarity_error() < 1e-12);
        }
    }

    #[test]
    fn haar_second_moment() {
        // E|q11|^2 = 1/n = 0.5, per-sample variance 1/12, so 1e5 samples give
        // standard error ~9e-4 against a 5e-3 window.
        let mut rng = rng_from_seed(77);
        let count = 100_000;
        let mean: f64 = (0..count)
            .map(|_| sample_haar_unitary(2, &mut rng).unwrap()[(0, 0)].norm_sqr())
            .sum::<f64>()
            / count as f64;
        assert!((0.495..=0.505).contains(&mean), "E|q11|^2 = {mean}");
    }

    #[test]
    fn random_arch_shapes_and_determinism() {
        let arch = sample_random_arch(3, 4, &mut rng_from_seed(8)).unwrap();
        assert_eq!(arch.basis().len(), 3);
        assert!(arch.basis().iter().all(|b| b.unitarity_error() < 1e-12));
        assert_eq!(
            sample_random_arch(2, 2, &mut rng_from_seed(8))
                .unwrap()
                .basis()
                .len(),
            1
        );
        assert_eq!(
            arch,
            sample_random_arch(3, 4, &mut rng_from_seed(8)).unwrap()
        );
        assert!(matches!(
            sample_random_arch(3, 1, &mut rng_from_seed(8)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn uniform_phases_range_mean_and_determinism() {
        let mut rng = rng_from_seed(31);
        let big = sample_uniform_phases(1000, 1000, &mut rng);
        assert!(big.as_slice().iter().all(|&p| (0.0..TAU).contains(&p)));
        let mean = big.as_slice().iter().sum::<f64>() / 1e6;
        assert!((mean - PI).abs() < 0.01, "mean = {mean}");
        assert_eq!(
            sample_uniform_phases(3, 4, &mut rng_from_seed(1)),
            sample_uniform_phases(3, 4, &mut rng_from_seed(1))
        );
    }

    #[test]
    fn training_set_noiseless_and_noisy() {
        let mut rng = rng_from_seed(12);
        let arch = sample_random_arch(3, 3, &mut rng).unwrap();
        let clean = generate_training_set(&arch, 5, 0.0, &mut rng).unwrap();
        assert_eq!(clean.len(), 5);
        for s in clean.samples() {
            assert_eq!(s.matrix, forward_unitary(&arch, &s.phases).unwrap());
        }
        assert_eq!(
            generate_training_set(&arch, 1, 0.0, &mut rng)
                .unwrap()
                .len(),
            1
        );
        assert!(generate_training_set(&arch, 0, 0.0, &mut rng).is_err());

        let eps = 0.05;
        let noisy = generate_training_set(&arch, 100, eps, &mut rng).unwrap();
        let power: f64 = noisy
            .samples()
            .iter()
            .map(|s| {
                let exact = forward_unitary(&arch, &s.phases).unwrap();
                s.matrix.sub(&exact).unwrap().frobenius_norm_sq()
            })
            .sum::<f64>()
            / (100.0 * 9.0);
        assert!(
            (0.8 * eps * eps..=1.2 * eps * eps).contains(&power),
            "noise power {power}"
        );
    }

    #[test]
    fn periodicity_in_each_phase() {
        let mut rng = rng_from_seed(21);
        let arch = sample_random_arch(3, 3, &mut rng).unwrap();
        let phases = sample_uniform_phases(3, 3, &mut rng);
        let base = forward_unitary(&arch, &phases).unwrap();
        for layer in 0..3 {
            for mode in 0..3 {
                let mut shifted = phases.clone();
                *shifted.get_mut(layer, mode) += TAU;
                let u = forward_unitary(&arch, &shifted).unwrap();
                assert!(u.max_abs_diff(&base).unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn architecture_json_schema() {
        let arch = sample_random_arch(2, 3, &mut rng_from_seed(6)).unwrap();
        let value = serde_json::to_value(&arch).unwrap();
        assert_eq!(value["modes"], 2);
        assert_eq!(value["phase_layers"], 3);
        assert_eq!(value["basis"].as_array().unwrap().len(), 2);
        let back: Architecture = serde_json::from_value(value.clone()).unwrap();
        assert_eq!(back, arch);
        assert_eq!(back.hash(), arch.hash());

        let mut broken = value;
        broken["phase_layers"] = 4.into();
        assert!(serde_json::from_value::<Architecture>(broken).is_err());
    }
}
