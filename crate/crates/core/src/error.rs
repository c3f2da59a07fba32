use mfris_sdp::SdpError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("subproblem infeasible: {0}")]
    Infeasible(String),
    #[error("solver stopped with status {status}: {context}")]
    SolverFailed { status: String, context: String },
    #[error("rank-one violation {violation:e} exceeds threshold {threshold:e}")]
    ExtractionRefused { violation: f64, threshold: f64 },
    #[error("leading eigenvector has a vanishing last entry ({0:e})")]
    DegenerateLift(f64),
    #[error("no feasible starting point in {attempts} attempts: {reason}")]
    InitializationFailed { attempts: usize, reason: String },
}
