use thiserror::Error;

use crate::golden::GoldenError;
use crate::model::ValidationErrors;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("coefficient {name} left the positive range at t = {t}: {value}")]
    NonPositiveCoefficient { name: String, t: f64, value: f64 },
    #[error("hierarchy truncated at K = {depth} did not converge: max |g_K - g_K+5| = {deviation:e} exceeds {tol:e}")]
    TruncationNotConverged {
        depth: usize,
        deviation: f64,
        tol: f64,
    },
    #[error("t = {t} lies outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("wealth must be positive, got {0}")]
    NonPositiveWealth(f64),
    #[error("reduced state {w:e} left the lattice grid (max {w_max:e}) at step {step}")]
    GridUnderflow { w: f64, w_max: f64, step: usize },
    #[error("no interior maximiser at lattice step {step}: {source}")]
    NoInteriorMax { step: usize, source: GoldenError },
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
