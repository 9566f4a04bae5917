//! File formats, the experiment runner and the `lewisreg` command-line
//! tool on top of [`lewisreg_core`].
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod io;

pub use lewisreg_core::{instances, lewis, linalg, oracle, rng, sampling, solvers, verify, DenseMatrix};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] lewisreg_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Process exit status: 2 for configuration mistakes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
