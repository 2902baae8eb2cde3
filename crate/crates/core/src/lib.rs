//! Learned linear models of layered linear-optical interferometers.
//!
//! An interferometer with `L` phase layers and `N` modes realizes
//! `U = Φ_L U_{L-1} … U_1 Φ_1`, with `Φ_ℓ = diag(e^{iφ^(ℓ)})`. Every matrix
//! element is linear in the `N^L` products of phase exponentials along the
//! paths through the mesh, so the device can be learned from tomography by
//! linear least squares ([`trainer`]) and then programmed by gradient
//! descent on the learned model ([`programmer`]). [`layerwise`] tunes a
//! device one layer at a time instead, and [`experiments`] runs the
//! Monte Carlo sweeps.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod features;
pub mod interferometer;
pub mod io;
pub mod layerwise;
pub mod matrix;
pub mod numerics;
pub mod programmer;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use features::{feature_vector, predict, true_weights_from_arch, LinearModel};
pub use interferometer::{
    add_tomography_noise, forward_unitary, generate_training_set, sample_haar_unitary,
    sample_random_arch, sample_uniform_phases, Architecture, PhaseConfig, TrainingSet,
};
pub use layerwise::{tune, DeviceOracle, TuneConfig, TuneTrace};
pub use matrix::ComplexMatrix;
pub use programmer::{frobenius_loss, program_phases, ProgramConfig, ProgrammingResult};
pub use trainer::{build_design_matrix, held_out_loss, solve_iterative, solve_pinv, SolverReport};
