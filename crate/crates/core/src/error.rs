use thiserror::Error;

use crate::higgs::StabilityClass;

/// Evidence attached to a failed Einstein–Bogomol'nyi solve on an unstable divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct FutakiCertificate {
    pub class: StabilityClass,
    /// Hilbert–Mumford exponent of the destabilising point.
    pub exponent: u32,
    /// Futaki invariant of the limiting monomial configuration, dominant point at infinity.
    pub futaki: num_complex::Complex64,
    /// Maximal weight of the limiting configuration (negative when unstable).
    pub maximal_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("resolution too small: {0}x{1} (need at least 8x8)")]
    ResolutionTooSmall(usize, usize),
    #[error("degenerate lattice modulus: imaginary part {0} must be positive")]
    DegenerateLattice(f64),
    #[error("field does not belong to this grid")]
    GridMismatch,
    #[error("operation needs a {expected} grid")]
    GridKind { expected: &'static str },
    #[error("non-finite value in field at node {0}")]
    NonFinite(usize),
    #[error("invalid divisor: {0}")]
    InvalidDivisor(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e}, min f {min_f})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        min_f: f64,
        /// True when the iterate drifted to f -> -inf.
        diverged: bool,
        /// Spectral tail of the area density when the only discrete solutions
        /// found were not resolved by the grid.
        unresolved: Option<f64>,
        certificate: Option<Box<FutakiCertificate>>,
    },
    #[error("continuation stalled at t = {last_t} (step fell below {min_step:e})")]
    StepUnderflow { last_t: f64, min_step: f64 },
    #[error("Kahler positivity lost at t = {t}: min(1 - Lap v) = {min_w}")]
    KahlerPositivityLost { t: f64, min_w: f64 },
    #[error("direction potential is not normalized: integral {0:e}")]
    Normalization(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
