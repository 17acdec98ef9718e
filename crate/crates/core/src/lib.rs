//! Mini-batch SGD with heavy-ball momentum on quadratic problems.
//!
//! Three simulators of increasing cost share one parameter type:
//! a spectral recursion on per-mode second moments ([`simulate::run_se`]),
//! the exact dense second-moment recursion ([`simulate::run_full_moments`])
//! and Monte-Carlo averaging of the stochastic iteration
//! ([`simulate::run_mc`]). The [`genfunc`] and [`asymptotics`] modules
//! predict the same trajectories analytically from generating functions.

// `!(x < y)` is used on purpose so that NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod genfunc;
pub mod json;
pub mod plot;
pub mod simulate;
pub mod special;
pub mod spectrum;

pub use error::{Error, Result};
pub use genfunc::GenFuncContext;
pub use simulate::{LossTrajectory, SgdParams};
pub use spectrum::{DatasetSize, FeatureProblem, PowerLawSpec, Spectrum};
