//! Label-budgeted `l1` / `lp` linear regression by Lewis-weight importance
//! sampling, together with the machinery used to certify it empirically.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, reports and the
//! command-line driver live in the `lewisreg` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod instances;
pub mod lewis;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
