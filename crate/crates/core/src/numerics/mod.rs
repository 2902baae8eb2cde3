//! Numerical kernels shared by the trainers and tuners.

pub mod bfgs;
pub mod pinv;
pub mod power_law;

pub use bfgs::{bfgs_minimize, bfgs_minimize_with, BfgsOptions, BfgsResult};
pub use pinv::{pseudoinverse, pseudoinverse_detailed, Pseudoinverse, DEFAULT_RCOND};
pub use power_law::{fit_power_law, PowerLawFit};
