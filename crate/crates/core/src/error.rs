use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid power-law spec: {0}")]
    InvalidSpec(String),
    #[error("invalid batch size b={batch} for dataset size {dataset}")]
    InvalidBatch { batch: usize, dataset: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty spectrum: the Hessian has no eigenvalue above the rank threshold")]
    EmptySpectrum,
    #[error("kernel is not positive semidefinite: DFT coefficient {value:e} at mode {mode}")]
    NonPsdKernel { mode: usize, value: f64 },
    #[error("kernel samples are not symmetric under i -> -i at index {0}")]
    AsymmetricKernel(usize),
    #[error("cannot fit power law: {0}")]
    NonLoggable(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    Resource { dim: usize, limit: usize },
    #[error("no stationary state: {0}")]
    NoStationaryState(String),
    #[error("outside analysis domain: {0}")]
    Domain(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("not divergent: U(1) = {0} <= 1")]
    NotDivergent(f64),
    #[error("not convergent: U(1) = {0} >= 1")]
    NotConvergent(f64),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("undefined ratio: {0}")]
    Undefined(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::NoRoot(_)
            | Error::NotDivergent(_)
            | Error::NotConvergent(_)
            | Error::NotApplicable(_)
            | Error::Undefined(_)
            | Error::NoStationaryState(_)
            | Error::EmptySpectrum
            | Error::NonPsdKernel { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
