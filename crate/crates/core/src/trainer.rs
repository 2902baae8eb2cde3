//! Least-squares training of the full linear model from tomography data.
//!
//! All matrix elements share one object–feature matrix `Θ` (one row per
//! measurement, one column per path feature), so its pseudoinverse `F` is
//! computed once and applied to each of the `N²` right-hand sides.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_dim, feature_vector, predict, slice_indices, LinearModel};
use crate::interferometer::{forward_unitary, Architecture, PhaseConfig, TrainingSet};
use crate::matrix::ComplexMatrix;
use crate::numerics::{pseudoinverse_detailed, DEFAULT_RCOND};
use crate::programmer::frobenius_loss;
use crate::seed::rng_from_seed;

/// `Θ`: row `m` is the feature vector of training phase setting `m`.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    modes: usize,
    layers: usize,
    theta: ComplexMatrix,
}

impl DesignMatrix {
    pub fn m_samples(&self) -> usize {
        self.theta.rows()
    }

    pub fn dim(&self) -> usize {
        self.theta.cols()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn phase_layers(&self) -> usize {
        self.layers
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.theta
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        self.theta.row(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: String,
    pub m_samples: usize,
    pub feature_dim: usize,
    pub rank_estimate: usize,
    pub rank_deficient: bool,
    /// `sqrt(mean |ΘW - U|²)` over all samples and matrix elements.
    pub residual_rms: f64,
    /// `σ_max / σ_min` over the retained singular values; `None` for the
    /// iterative solver or an all-zero design.
    pub condition_estimate: Option<f64>,
    pub wall_time: f64,
    pub epochs: Option<usize>,
}

/// Columns used, their weights, rank and condition estimate for one element.
type SliceSolution = (Vec<usize>, Vec<Complex64>, usize, Option<f64>);

/// Which weights the least-squares problem is allowed to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpace {
    /// All `N^L` path features for every matrix element.
    #[default]
    Full,
    /// Only the `N^{L-2}` features with `k_0 = i` and `k_{L-1} = j` for
    /// element `(i, j)`; one pseudoinverse per element.
    Slice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinvOptions {
    pub rcond: f64,
    pub feature_space: FeatureSpace,
}

impl Default for PinvOptions {
    fn default() -> Self {
        Self {
            rcond: DEFAULT_RCOND,
            feature_space: FeatureSpace::Full,
        }
    }
}

pub fn build_design_matrix(training: &TrainingSet) -> Result<DesignMatrix> {
    let (modes, layers) = (training.modes(), training.phase_layers());
    if layers < 2 {
        return Err(Error::domain("training data needs at least 2 phase layers"));
    }
    let dim = feature_dim(modes, layers);
    let mut data = Vec::with_capacity(training.len() * dim);
    for (idx, s) in training.samples().iter().enumerate() {
        if s.phases.layers() != layers || s.phases.modes() != modes {
            return Err(Error::shape(format!(
                "sample {idx} has inconsistent phase shape"
            )));
        }
        data.extend(feature_vector(&s.phases).into_vec());
    }
    Ok(DesignMatrix {
        modes,
        layers,
        theta: ComplexMatrix::from_row_major(training.len(), dim, data)?,
    })
}

fn check_pair(design: &DesignMatrix, training: &TrainingSet) -> Result<()> {
    if design.m_samples() != training.len()
        || design.modes != training.modes()
        || design.layers != training.phase_layers()
    {
        return Err(Error::shape(format!(
            "design matrix ({} rows, {}x{}) does not match training set ({} samples, {}x{})",
            design.m_samples(),
            design.layers,
            design.modes,
            training.len(),
            training.phase_layers(),
            training.modes()
        )));
    }
    Ok(())
}

/// Right-hand side for element `(i, j)`: `u^(m)_ij` over all samples.
fn rhs(training: &TrainingSet, i: usize, j: usize) -> Vec<Complex64> {
    training
        .samples()
        .iter()
        .map(|s| s.matrix[(i, j)])
        .collect()
}

fn apply(f: &ComplexMatrix, y: &[Complex64]) -> Vec<Complex64> {
    (0..f.rows())
        .map(|k| f.row(k).iter().zip(y).map(|(a, b)| a * b).sum())
        .collect()
}

fn residual_rms(design: &DesignMatrix, model: &LinearModel, training: &TrainingSet) -> f64 {
    let n = design.modes;
    let count = (design.m_samples() * n * n) as f64;
    (training_loss_with(design, model, training) * design.m_samples() as f64 / count).sqrt()
}

/// Minimum-norm least-squares weights via one pseudoinverse of `Θ`.
pub fn solve_pinv(
    design: &DesignMatrix,
    training: &TrainingSet,
) -> Result<(LinearModel, SolverReport)> {
    solve_pinv_with(design, training, &PinvOptions::default())
}

pub fn solve_pinv_with(
    design: &DesignMatrix,
    training: &TrainingSet,
    opts: &PinvOptions,
) -> Result<(LinearModel, SolverReport)> {
    check_pair(design, training)?;
    let start = Instant::now();
    let (n, l) = (design.modes, design.layers);
    let mut model = LinearModel::zeros(n, l, training.architecture_hash());
    let elements: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();

    let (feature_count, rank, condition) = match opts.feature_space {
        FeatureSpace::Full => {
            let pinv = pseudoinverse_detailed(design.matrix(), opts.rcond);
            let solved: Vec<Vec<Complex64>> = elements
                .par_iter()
                .map(|&(i, j)| apply(&pinv.matrix, &rhs(training, i, j)))
                .collect();
            for (&(i, j), w) in elements.iter().zip(solved) {
                model.weights_mut(i, j).copy_from_slice(&w);
            }
            let cond = pinv.sigma_min_retained().map(|s| pinv.sigma_max() / s);
            (design.dim(), pinv.rank, cond)
        }
        FeatureSpace::Slice => {
            let m = design.m_samples();
            let solved: Vec<SliceSolution> = elements
                .par_iter()
                .map(|&(i, j)| {
                    let cols: Vec<usize> = slice_indices(n, l, i, j).collect();
                    let sub = ComplexMatrix::from_fn(m, cols.len(), |r, c| design.row(r)[cols[c]]);
                    let pinv = pseudoinverse_detailed(&sub, opts.rcond);
                    let w = apply(&pinv.matrix, &rhs(training, i, j));
                    let cond = pinv.sigma_min_retained().map(|s| pinv.sigma_max() / s);
                    (cols, w, pinv.rank, cond)
                })
                .collect();
            let mut min_rank = usize::MAX;
            let mut worst_cond: Option<f64> = None;
            let features = feature_dim(n, l - 2);
            for (&(i, j), (cols, w, rank, cond)) in elements.iter().zip(solved) {
                let dst = model.weights_mut(i, j);
                for (c, v) in cols.into_iter().zip(w) {
                    dst[c] = v;
                }
                min_rank = min_rank.min(rank);
                worst_cond = match (worst_cond, cond) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
            (features, min_rank, worst_cond)
        }
    };

    let rank_deficient = rank < feature_count;
    if rank_deficient {
        log::warn!(
            "rank-deficient design: rank {rank} < {feature_count} features ({} samples); returning the minimum-norm solution",
            design.m_samples()
        );
    }
    let report = SolverReport {
        solver: "pinv".into(),
        m_samples: design.m_samples(),
        feature_dim: feature_count,
        rank_estimate: rank,
        rank_deficient,
        residual_rms: residual_rms(design, &model, training),
        condition_estimate: condition,
        wall_time: start.elapsed().as_secs_f64(),
        epochs: None,
    };
    Ok((model, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterativeConfig {
    /// Step size applied to the batch-summed gradient; `None` means `0.1 / M`.
    pub learning_rate: Option<f64>,
    /// `None` means `min(M, 64)`; `batch_size = M` is plain gradient descent.
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            batch_size: None,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Mini-batch gradient descent on the training loss, starting from `init`
/// (or all-zero weights). Returns the best weights seen, so the final loss
/// never exceeds the initial one.
pub fn solve_iterative(
    design: &DesignMatrix,
    training: &TrainingSet,
    config: &IterativeConfig,
    init: Option<&LinearModel>,
) -> Result<(LinearModel, SolverReport)> {
    check_pair(design, training)?;
    let start = Instant::now();
    let m = design.m_samples();
    let (n, l) = (design.modes, design.layers);
    let lr = config.learning_rate.unwrap_or(0.1 / m as f64);
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::domain(format!(
            "learning rate must be > 0, got {lr}"
        )));
    }
    if config.epochs < 1 {
        return Err(Error::domain("epochs must be >= 1"));
    }
    let batch = config.batch_size.unwrap_or(m.min(64));
    if batch < 1 {
        return Err(Error::domain("batch size must be >= 1"));
    }
    let batch = batch.min(m);

    let mut model = match init {
        Some(w) => {
            if w.modes() != n || w.phase_layers() != l {
                return Err(Error::shape(
                    "initial model does not match the training data",
                ));
            }
            w.clone()
        }
        None => LinearModel::zeros(n, l, training.architecture_hash()),
    };
    let dim = design.dim();
    let initial_loss = training_loss_with(design, &model, training);
    let mut best = (initial_loss, model.clone());
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut grad = vec![Complex64::new(0.0, 0.0); n * n * dim];

    let make_report = |model: &LinearModel, epochs: usize, start: &Instant| SolverReport {
        solver: "iterative".into(),
        m_samples: m,
        feature_dim: dim,
        rank_estimate: dim.min(m),
        rank_deficient: m < dim,
        residual_rms: residual_rms(design, model, training),
        condition_estimate: None,
        wall_time: start.elapsed().as_secs_f64(),
        epochs: Some(epochs),
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
            for &s in chunk {
                let theta = design.row(s);
                let target = &training.samples()[s].matrix;
                for i in 0..n {
                    for j in 0..n {
                        let w = model.weights(i, j);
                        let pred: Complex64 = w.iter().zip(theta).map(|(a, b)| a * b).sum();
                        let r = pred - target[(i, j)];
                        let g = &mut grad[(i * n + j) * dim..(i * n + j + 1) * dim];
                        for (gk, th) in g.iter_mut().zip(theta) {
                            *gk += th.conj() * r;
                        }
                    }
                }
            }
            for (w, g) in model.all_weights_mut().iter_mut().zip(&grad) {
                *w -= g * lr;
            }
        }
        let loss = training_loss_with(design, &model, training);
        if !loss.is_finite() || loss > 1e6 * initial_loss.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverged {
                epoch,
                loss,
                report: Box::new(make_report(&model, epoch, &start)),
            });
        }
        if loss < best.0 {
            best = (loss, model.clone());
        }
    }

    let model = best.1;
    let report = make_report(&model, config.epochs, &start);
    Ok((model, report))
}

fn training_loss_with(design: &DesignMatrix, model: &LinearModel, training: &TrainingSet) -> f64 {
    let n = design.modes;
    let m = design.m_samples();
    let total: f64 = (0..m)
        .map(|s| {
            let theta = design.row(s);
            let target = &training.samples()[s].matrix;
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let pred: Complex64 = model
                        .weights(i, j)
                        .iter()
                        .zip(theta)
                        .map(|(a, b)| a * b)
                        .sum();
                    acc += (pred - target[(i, j)]).norm_sqr();
                }
            }
            acc
        })
        .sum();
    total / m as f64
}

/// `(1/M) Σ_m Σ_ij |Σ_k w θ - u^(m)_ij|²`.
pub fn training_loss(model: &LinearModel, training: &TrainingSet) -> Result<f64> {
    if model.modes() != training.modes() || model.phase_layers() != training.phase_layers() {
        return Err(Error::shape("model does not match the training data"));
    }
    let total: f64 = training
        .samples()
        .iter()
        .map(|s| {
            Ok(predict(model, &s.phases)?
                .sub(&s.matrix)?
                .frobenius_norm_sq())
        })
        .sum::<Result<f64>>()?;
    Ok(total / training.len() as f64)
}

/// Mean `(1/N)||U_model - U||²` over held-out phase settings, against the
/// noiseless device transformation.
pub fn held_out_loss(
    model: &LinearModel,
    arch: &Architecture,
    test: &[PhaseConfig],
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let total = test
        .iter()
        .map(|p| frobenius_loss(&predict(model, p)?, &forward_unitary(arch, p)?))
        .sum::<Result<f64>>()?;
    Ok(total / test.len() as f64)
}
