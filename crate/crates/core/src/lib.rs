//! Kernel-based identification of NARX one-step-ahead predictors whose
//! simulation is guaranteed stable by construction.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: kernel families, hyperparameters and Gram matrices.
//! * [`viability`]: stability targets, closed-form viability sets, feasible
//!   parameterizations and a sampling falsifier.
//! * [`solver`]: ridge and norm-constrained coefficient solves.
//! * [`model_selection`]: hyperparameter search with stability constraints.
//! * [`predictor`]: one-step prediction and free-run simulation.
//! * [`benchmarks`]: synthetic systems and the Monte Carlo runner.

pub mod benchmarks;
pub mod error;
pub mod kernels;
pub mod model_selection;
pub mod predictor;
pub mod solver;
pub mod viability;

pub use error::{Error, Result};
