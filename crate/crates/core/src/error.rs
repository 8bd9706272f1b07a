use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rates {0} and {1} coincide but are not an exact +/- pair")]
    DuplicateRate(f64, f64),
    #[error("atom at p = {p} has nonpositive mass {c2}")]
    NonpositiveMass { p: f64, c2: f64 },
    #[error("time argument {0} is negative")]
    NegativeTime(f64),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid scattering data: {0}")]
    InvalidScatteringData(String),
    #[error("near-degenerate configuration: eta = {eta} is within 1e-10 of |p| = {p}")]
    NearDegenerate { eta: f64, p: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),
    #[error("grid too coarse: h = {h} exceeds L/100 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },
    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_) | Error::NumericalOverflow(_) | Error::NearDegenerate { .. }
        )
    }
}
