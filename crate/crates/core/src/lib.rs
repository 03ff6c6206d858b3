//! Minimum S-divergence estimation for discrete parametric models.
//!
//! The S-divergence family is indexed by `alpha` in `[0, 1]` and a real
//! `lambda`; `alpha = 0` gives the power divergences and `lambda = 0` the
//! density power divergences. The crate fits scalar discrete models by
//! minimizing the divergence to the empirical frequencies, computes the
//! model-case sandwich variance and efficiency, and runs Monte Carlo plans.

pub mod asymptotics;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod io;
pub mod models;
pub mod simulation;
pub mod table;

pub use divergence::{s_divergence, DivergenceParams, PmfVector, Regime};
pub use error::{Error, Result};
pub use estimation::{fit, fit_grid, CellOutcome, FitGrid, FitOptions, FitResult};
pub use models::{DiscreteModel, Geometric, Model, Poisson, TruncationPolicy};
pub use table::FrequencyTable;
