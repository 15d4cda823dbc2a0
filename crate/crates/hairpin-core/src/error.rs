//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by model construction, likelihood evaluation, and fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two objects that must agree on the number of sites do not.
    DimensionMismatch { expected: usize, found: usize },
    /// A dataset with no patterns was supplied where at least one is required.
    EmptyDataset,
    /// A rate or probability lies outside `[0, 1]`.
    NonProbability { name: &'static str, value: f64 },
    /// A beta mean/variance parameter sits on the boundary of its open support.
    BoundaryParameter { name: &'static str, value: f64 },
    /// The stationarity denominator `1 + dp + dd - mu` is not positive:
    /// the per-site chain is absorbing and has no interior fixed point.
    AbsorbingChain { denominator: f64 },
    /// Exhaustive enumeration was requested for more sites than it can handle.
    EnumerationTooLarge { sites: usize, max: usize },
    /// A summary was requested from fewer draws than the operation needs.
    TooFewDraws { needed: usize, found: usize },
    /// A named parameter column is absent from the samples.
    UnknownParameter { name: String },
    /// An initial MCMC state lies outside the prior support.
    InvalidInit { reason: String },
    /// Observed dyad fractions do not form a distribution.
    BadFractions { sum: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected} sites, found {found}")
            }
            Error::EmptyDataset => write!(f, "dataset holds no patterns"),
            Error::NonProbability { name, value } => {
                write!(f, "{name} = {value} is outside [0, 1]")
            }
            Error::BoundaryParameter { name, value } => {
                write!(f, "{name} = {value} must lie strictly inside (0, 1)")
            }
            Error::AbsorbingChain { denominator } => {
                write!(f, "absorbing process: stationarity denominator {denominator} <= 0")
            }
            Error::EnumerationTooLarge { sites, max } => {
                write!(f, "enumeration limited to {max} sites, got {sites}")
            }
            Error::TooFewDraws { needed, found } => {
                write!(f, "need at least {needed} draws, found {found}")
            }
            Error::UnknownParameter { name } => write!(f, "unknown parameter '{name}'"),
            Error::InvalidInit { reason } => write!(f, "invalid initial state: {reason}"),
            Error::BadFractions { sum } => {
                write!(f, "dyad fractions sum to {sum}, expected 1")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
