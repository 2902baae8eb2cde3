//! Programming a target transformation on a trained model.
//!
//! The phases are found by multi-start BFGS on `||U_model(φ) - U_target||²_F`
//! using the analytic model gradient; no global phase is removed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{predict_with_gradient, LinearModel};
use crate::interferometer::{sample_uniform_phases, PhaseConfig};
use crate::matrix::ComplexMatrix;
use crate::numerics::{bfgs_minimize, BfgsResult};
use crate::seed::child_rng;

/// `(1/N) Σ_ij |a_ij - b_ij|²` with `N` the row count.
pub fn frobenius_loss(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(frobenius_distance_sq(a, b)? / a.rows() as f64)
}

/// Unnormalized `||a - b||²_F`.
pub fn frobenius_distance_sq(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgramConfig {
    pub max_iters: usize,
    pub restarts: usize,
    /// Gradient max-norm at which a restart counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            restarts: 5,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgrammingResult {
    pub phases: PhaseConfig,
    /// `||U_model(φ*) - U_target||²_F`.
    pub final_loss: f64,
    /// The same distance divided by `N`.
    pub frobenius_loss: f64,
    pub iterations_used: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Objective `f(φ) = ||U(φ) - T||²_F` and its gradient
/// `∂f/∂φ_p = 2 Re Σ_ij conj(r_ij) ∂u_ij/∂φ_p`.
pub(crate) fn model_objective(
    model: &LinearModel,
    target: &ComplexMatrix,
    x: &[f64],
) -> (f64, Vec<f64>) {
    let (l, n) = (model.phase_layers(), model.modes());
    let Ok(phases) = PhaseConfig::new(l, n, x.to_vec()) else {
        return (f64::NAN, vec![f64::NAN; x.len()]);
    };
    let Ok((u, grad)) = predict_with_gradient(model, &phases) else {
        return (f64::NAN, vec![f64::NAN; x.len()]);
    };
    let resid: Vec<_> = u
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let f = resid.iter().map(|r| r.norm_sqr()).sum();
    let g = grad
        .iter()
        .map(|d| {
            2.0 * resid
                .iter()
                .zip(d.as_slice())
                .map(|(r, dz)| (r.conj() * dz).re)
                .sum::<f64>()
        })
        .collect();
    (f, g)
}

pub fn program_phases(
    model: &LinearModel,
    target: &ComplexMatrix,
    config: &ProgramConfig,
) -> Result<ProgrammingResult> {
    let (l, n) = (model.phase_layers(), model.modes());
    if target.shape() != (n, n) {
        return Err(Error::shape(format!(
            "target is {}x{}, model has {n} modes",
            target.rows(),
            target.cols()
        )));
    }
    if config.restarts < 1 {
        return Err(Error::domain("restarts must be >= 1"));
    }

    let runs: Vec<BfgsResult> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(config.seed, r as u64);
            let x0 = sample_uniform_phases(n, l, &mut rng);
            bfgs_minimize(
                |x: &[f64]| model_objective(model, target, x),
                x0.as_slice(),
                config.max_iters,
                config.tol,
            )
        })
        .collect();

    let best = runs
        .into_iter()
        .filter(|r| r.f.is_finite())
        .reduce(|best, r| if r.f < best.f { r } else { best })
        .ok_or(Error::NonFinite("programming loss"))?;

    Ok(ProgrammingResult {
        phases: PhaseConfig::new(l, n, best.x)?,
        final_loss: best.f,
        frobenius_loss: best.f / n as f64,
        iterations_used: best.iterations,
        restarts_used: config.restarts,
        converged: best.converged,
    })
}
