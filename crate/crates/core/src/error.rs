use thiserror::Error;

/// Errors raised by the library. Each variant names the offending quantity.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("site {site:?} is outside the lattice (d = {d}, K = {k})")]
    OffLattice { site: Vec<i64>, d: usize, k: usize },

    #[error("lattice mismatch: expected d = {expected_d}, K = {expected_k}, found d = {found_d}, K = {found_k}")]
    LatticeMismatch { expected_d: usize, expected_k: usize, found_d: usize, found_k: usize },

    #[error("grid of {grid} points per axis cannot resolve |a| <= {k} without aliasing (need >= {needed})")]
    Aliasing { grid: usize, k: usize, needed: usize },

    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },

    #[error("polynomial is not real: coefficient of {0} is not the conjugate of its mirror")]
    NotReal(String),

    #[error("monomial {0} has nonzero momentum")]
    NonzeroMomentum(String),

    #[error("non-resonance violated: divisor of non-resonant {multi_index} is {divisor:e}")]
    VanishingDivisor { multi_index: String, divisor: f64 },

    #[error("resonant tuple {0} rejected")]
    ResonantTuple(String),

    #[error("integration diverged at t = {time}: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("budget exceeded: {what} would need {needed}, budget is {budget}")]
    Budget { what: &'static str, needed: u128, budget: u128 },

    #[error("schema error in {context}: {reason}")]
    Schema { context: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

/// Serde adapter mapping `+∞` to `null` and back, for minima over empty sets.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
