//! Path features and the linear interferometer model.
//!
//! Expanding `U = Φ_L U_{L-1} ... U_1 Φ_1` element-wise gives
//! `u_ij = Σ_paths w_path θ_path`, where a path is an index tuple
//! `(k_0, ..., k_{L-1})` with `k_0` the mode index at layer `L` and `k_{L-1}`
//! the mode index at layer 1. The feature `θ_path = Π e^{iφ}` collects one
//! phase per layer along the path; the weight collects the basis-matrix
//! entries along it and is nonzero only when `k_0 = i` and `k_{L-1} = j`.
//!
//! Features use the full `N^L` tuple space, shared by all `(i, j)`, in
//! lexicographic order with `k_0` varying slowest (`"lex-v1"`).

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::interferometer::{Architecture, PhaseConfig};
use crate::matrix::ComplexMatrix;

pub const FEATURE_ORDERING: &str = "lex-v1";

/// `modes^layers`, panicking on overflow.
pub fn feature_dim(modes: usize, layers: usize) -> usize {
    u32::try_from(layers)
        .ok()
        .and_then(|l| modes.checked_pow(l))
        .expect("feature dimension overflows usize")
}

/// Mode index at tuple position `pos` (position 0 is layer `L`).
#[inline]
pub fn tuple_digit(index: usize, pos: usize, modes: usize, layers: usize) -> usize {
    (index / modes.pow((layers - 1 - pos) as u32)) % modes
}

/// Feature indices of the `(i, j)` slice: tuples with `k_0 = i`, `k_{L-1} = j`.
pub fn slice_indices(
    modes: usize,
    layers: usize,
    i: usize,
    j: usize,
) -> impl Iterator<Item = usize> {
    let inner = feature_dim(modes, layers - 2);
    let head = i * modes.pow((layers - 1) as u32);
    (0..inner).map(move |mid| head + mid * modes + j)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    modes: usize,
    layers: usize,
    entries: Vec<Complex64>,
}

impl FeatureVector {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Path features of one phase setting, in canonical order.
pub fn feature_vector(phases: &PhaseConfig) -> FeatureVector {
    let (layers, modes) = (phases.layers(), phases.modes());
    let mut entries = vec![Complex64::new(1.0, 0.0)];
    entries.reserve(feature_dim(modes, layers));
    // Position 0 is the output-side layer; later positions vary faster.
    for layer in (0..layers).rev() {
        let exps = phases.layer_exponentials(layer);
        entries = entries
            .iter()
            .flat_map(|&prefix| exps.iter().map(move |&e| prefix * e))
            .collect();
    }
    FeatureVector {
        modes,
        layers,
        entries,
    }
}

/// One weight vector per matrix element over the `N^L` feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    modes: usize,
    layers: usize,
    architecture_hash: String,
    /// Row-major over `(i, j)`, each block of length `N^L`.
    weights: Vec<Complex64>,
}

impl LinearModel {
    pub fn zeros(modes: usize, layers: usize, architecture_hash: impl Into<String>) -> Self {
        let dim = feature_dim(modes, layers);
        Self {
            modes,
            layers,
            architecture_hash: architecture_hash.into(),
            weights: vec![Complex64::new(0.0, 0.0); modes * modes * dim],
        }
    }

    pub fn from_weights(
        modes: usize,
        layers: usize,
        architecture_hash: impl Into<String>,
        weights: Vec<Complex64>,
    ) -> Result<Self> {
        if modes == 0 || layers < 2 {
            return Err(Error::shape(format!(
                "a model needs >= 1 mode and >= 2 layers, got {modes}x{layers}"
            )));
        }
        let dim = feature_dim(modes, layers);
        if weights.len() != modes * modes * dim {
            return Err(Error::shape(format!(
                "{} weights, expected {} = {modes}^2 x {dim}",
                weights.len(),
                modes * modes * dim
            )));
        }
        if weights
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(Self {
            modes,
            layers,
            architecture_hash: architecture_hash.into(),
            weights,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn phase_layers(&self) -> usize {
        self.layers
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.modes, self.layers)
    }

    pub fn architecture_hash(&self) -> &str {
        &self.architecture_hash
    }

    pub fn weights(&self, i: usize, j: usize) -> &[Complex64] {
        let dim = self.feature_dim();
        let start = (i * self.modes + j) * dim;
        &self.weights[start..start + dim]
    }

    pub fn weights_mut(&mut self, i: usize, j: usize) -> &mut [Complex64] {
        let dim = self.feature_dim();
        let start = (i * self.modes + j) * dim;
        &mut self.weights[start..start + dim]
    }

    pub fn all_weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub(crate) fn all_weights_mut(&mut self) -> &mut [Complex64] {
        &mut self.weights
    }

    pub fn check_phases(&self, phases: &PhaseConfig) -> Result<()> {
        if phases.layers() != self.layers || phases.modes() != self.modes {
            return Err(Error::shape(format!(
                "phase config is {}x{}, model expects {}x{}",
                phases.layers(),
                phases.modes(),
                self.layers,
                self.modes
            )));
        }
        Ok(())
    }

    /// Fails with [`Error::StaleModel`] if the model was trained on another
    /// architecture.
    pub fn ensure_architecture(&self, arch: &Architecture) -> Result<()> {
        if arch.modes() != self.modes || arch.phase_layers() != self.layers {
            return Err(Error::shape(format!(
                "model is {}x{}, architecture is {}x{}",
                self.layers,
                self.modes,
                arch.phase_layers(),
                arch.modes()
            )));
        }
        let actual = arch.hash();
        if actual != self.architecture_hash {
            return Err(Error::StaleModel {
                model: self.architecture_hash.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Largest weight modulus outside the structural `(i, j)` slices.
    pub fn max_off_slice_weight(&self) -> f64 {
        let dim = self.feature_dim();
        let (n, l) = (self.modes, self.layers);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for (t, w) in self.weights(i, j).iter().enumerate() {
                    if tuple_digit(t, 0, n, l) != i || t % n != j {
                        worst = worst.max(w.norm());
                    }
                }
            }
        }
        debug_assert!(dim > 0);
        worst
    }
}

/// Zeroes every weight outside the `(i, j)` slice, leaving the structured
/// form `u_ij = Σ_{k̄} w_{i k̄ j} θ_{i k̄ j}`.
pub fn project_to_slice(model: &LinearModel) -> LinearModel {
    let (n, l) = (model.modes, model.layers);
    let mut out = LinearModel::zeros(n, l, model.architecture_hash.clone());
    for i in 0..n {
        for j in 0..n {
            let src = model.weights(i, j);
            let dst = out.weights_mut(i, j);
            for t in slice_indices(n, l, i, j) {
                dst[t] = src[t];
            }
        }
    }
    out
}

/// `u_ij = <w_ij, θ(φ)>` for every matrix element.
pub fn predict(model: &LinearModel, phases: &PhaseConfig) -> Result<ComplexMatrix> {
    model.check_phases(phases)?;
    let theta = feature_vector(phases);
    Ok(predict_from_features(model, theta.as_slice()))
}

/// [`predict`] after checking that the model belongs to `arch`.
pub fn predict_checked(
    model: &LinearModel,
    arch: &Architecture,
    phases: &PhaseConfig,
) -> Result<ComplexMatrix> {
    model.ensure_architecture(arch)?;
    predict(model, phases)
}

pub(crate) fn predict_from_features(model: &LinearModel, theta: &[Complex64]) -> ComplexMatrix {
    let n = model.modes;
    ComplexMatrix::from_fn(n, n, |i, j| {
        model
            .weights(i, j)
            .iter()
            .zip(theta)
            .map(|(w, t)| w * t)
            .sum()
    })
}

/// `∂U/∂φ^(ℓ)_p` for every phase, laid out like a [`PhaseConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGradient {
    layers: usize,
    modes: usize,
    partials: Vec<ComplexMatrix>,
}

impl PhaseGradient {
    /// Partial derivative with respect to phase `mode` of layer `layer`
    /// (both 0-based).
    pub fn get(&self, layer: usize, mode: usize) -> &ComplexMatrix {
        &self.partials[layer * self.modes + mode]
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn iter(&self) -> impl Iterator<Item = &ComplexMatrix> {
        self.partials.iter()
    }
}

/// Analytic phase gradient of [`predict`]:
/// `∂u_ij/∂φ^(ℓ)_p = i Σ_{paths through p at layer ℓ} w θ`.
pub fn predict_gradient(model: &LinearModel, phases: &PhaseConfig) -> Result<PhaseGradient> {
    Ok(predict_with_gradient(model, phases)?.1)
}

pub fn predict_with_gradient(
    model: &LinearModel,
    phases: &PhaseConfig,
) -> Result<(ComplexMatrix, PhaseGradient)> {
    model.check_phases(phases)?;
    let (n, l) = (model.modes, model.layers);
    let theta = feature_vector(phases);
    let theta = theta.as_slice();
    let dim = theta.len();

    // digits[t * l + pos]: mode index of tuple t at position pos.
    let mut digits = vec![0usize; dim * l];
    for t in 0..dim {
        for pos in 0..l {
            digits[t * l + pos] = tuple_digit(t, pos, n, l);
        }
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut u = ComplexMatrix::zeros(n, n);
    let mut partials = vec![ComplexMatrix::zeros(n, n); l * n];
    let mut acc = vec![zero; l * n];
    for i in 0..n {
        for j in 0..n {
            acc.iter_mut().for_each(|a| *a = zero);
            let mut total = zero;
            for (t, (w, th)) in model.weights(i, j).iter().zip(theta).enumerate() {
                let term = w * th;
                total += term;
                for pos in 0..l {
                    let layer = l - 1 - pos;
                    acc[layer * n + digits[t * l + pos]] += term;
                }
            }
            u[(i, j)] = total;
            for (slot, a) in acc.iter().enumerate() {
                partials[slot][(i, j)] = Complex64::new(0.0, 1.0) * a;
            }
        }
    }
    Ok((
        u,
        PhaseGradient {
            layers: l,
            modes: n,
            partials,
        },
    ))
}

/// Ground-truth weights `w_{i k̄ j} = u^(L-1)_{i k_1} ... u^(1)_{k_{L-2} j}`
/// on each `(i, j)` slice, zero elsewhere.
pub fn true_weights_from_arch(arch: &Architecture) -> LinearModel {
    let (n, l) = (arch.modes(), arch.phase_layers());
    let basis = arch.basis();
    let mut model = LinearModel::zeros(n, l, arch.hash());
    for i in 0..n {
        for j in 0..n {
            let w = model.weights_mut(i, j);
            for t in slice_indices(n, l, i, j) {
                let mut prod = Complex64::new(1.0, 0.0);
                for pos in 0..l - 1 {
                    let from = tuple_digit(t, pos, n, l);
                    let to = tuple_digit(t, pos + 1, n, l);
                    prod *= basis[l - 2 - pos][(from, to)];
                }
                w[t] = prod;
            }
        }
    }
    model
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    modes: usize,
    phase_layers: usize,
    feature_ordering: String,
    architecture_hash: String,
    weights: Vec<Vec<[f64; 2]>>,
}

impl Serialize for LinearModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = self.feature_dim();
        ModelFile {
            modes: self.modes,
            phase_layers: self.layers,
            feature_ordering: FEATURE_ORDERING.to_owned(),
            architecture_hash: self.architecture_hash.clone(),
            weights: self
                .weights
                .chunks(dim)
                .map(|block| block.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LinearModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let f = ModelFile::deserialize(deserializer)?;
        if f.feature_ordering != FEATURE_ORDERING {
            return Err(D::Error::custom(Error::FeatureOrdering(f.feature_ordering)));
        }
        if f.weights.len() != f.modes * f.modes {
            return Err(D::Error::custom(format!(
                "{} weight vectors for {} matrix elements",
                f.weights.len(),
                f.modes * f.modes
            )));
        }
        let weights = f
            .weights
            .iter()
            .flatten()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        LinearModel::from_weights(f.modes, f.phase_layers, f.architecture_hash, weights)
            .map_err(D::Error::custom)
    }
}
