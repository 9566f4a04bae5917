use core::fmt;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix or vector shapes do not agree.
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// A non-finite entry was supplied where finite reals are required.
    NonFinite,
    /// The input carries no usable information (all-zero matrix, rank
    /// deficient system, too few weighted rows).
    Degenerate(&'static str),
    /// A scalar parameter is outside its admissible range.
    Domain {
        name: &'static str,
        value: f64,
    },
    /// A row index is out of bounds.
    IndexOutOfRange {
        index: usize,
        len: usize,
    },
    /// The label oracle refused a query because the budget is spent.
    BudgetExceeded {
        budget: usize,
    },
    /// A documented precondition of a check did not hold.
    Precondition(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => f.write_str("input contains NaN or infinite values"),
            Error::Degenerate(what) => write!(f, "degenerate input: {what}"),
            Error::Domain { name, value } => write!(f, "parameter {name} = {value} out of range"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::BudgetExceeded { budget } => write!(f, "query budget of {budget} exhausted"),
            Error::Precondition(what) => write!(f, "precondition failed: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
