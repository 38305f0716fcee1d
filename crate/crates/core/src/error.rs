use thiserror::Error;

/// Errors raised across the basis, lifting, synthesis, certification and
/// simulation stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid plant configuration: {0}")]
    InvalidPlant(String),

    #[error("point {point:?} is outside the admissible set: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error(
        "eigenvalue search radius exhausted: requested {requested} modes, \
         only {found} multi-indices satisfy sum k_i^2 <= {bound}"
    )]
    SearchRadiusExhausted {
        requested: usize,
        found: usize,
        bound: f64,
    },

    #[error("insufficient eigenvalues: {0}")]
    InsufficientEigenvalues(String),

    #[error("unsupported multiplicity pattern {pattern:?} among the unstable modes")]
    UnsupportedMultiplicity { pattern: Vec<usize> },

    #[error("admissibility violated at mode {index}: {reason}")]
    Admissibility { index: usize, reason: String },

    #[error("lifted projection table has no valid entry for mode {0}")]
    InvalidTable(usize),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("sample count {got} does not match the quadrature grid ({expected} nodes)")]
    GridMismatch { expected: usize, got: usize },

    #[error("sensor-placement: {reason}")]
    SensorPlacement { mode: Option<usize>, reason: String },

    #[error("observer pole placement failed: {0}")]
    Placement(String),

    #[error("synthesis failure: {0}")]
    Synthesis(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("not yet certifiable (increase N): {0}")]
    NotYetCertifiable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("insufficient samples for decay fit: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
