//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A state violated the positive-odd contract.
    InvalidState(String),
    /// A noise value violated the odd, >= -1 contract.
    InvalidXi(String),
    /// A noise distribution failed validation.
    InvalidDistribution(String),
    /// 2-adic valuation requested for zero or an odd number.
    InvalidValuationInput(String),
    /// A run or solver configuration is unusable.
    Config(String),
    /// A query needs data the accumulator does not hold.
    NoData(String),
    /// An iterative solve hit its budget; carries the last residual.
    BudgetExceeded { what: String, residual: f64 },
    /// The target state cannot be reached inside the truncation.
    Unreachable(String),
    /// A certificate or distribution lacks support for a required value.
    UnsupportedXi(String),
    /// Malformed input file or inline JSON.
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidState(s) => write!(f, "invalid state: {s}"),
            Error::InvalidXi(s) => write!(f, "invalid xi: {s}"),
            Error::InvalidDistribution(s) => write!(f, "invalid distribution: {s}"),
            Error::InvalidValuationInput(s) => write!(f, "invalid valuation input: {s}"),
            Error::Config(s) => write!(f, "configuration error: {s}"),
            Error::NoData(s) => write!(f, "no data: {s}"),
            Error::BudgetExceeded { what, residual } => {
                write!(f, "{what}: iteration budget exceeded (residual {residual:.3e})")
            }
            Error::Unreachable(s) => write!(f, "unreachable: {s}"),
            Error::UnsupportedXi(s) => write!(f, "unsupported xi: {s}"),
            Error::Parse(s) => write!(f, "parse error: {s}"),
        }
    }
}

impl std::error::Error for Error {}
