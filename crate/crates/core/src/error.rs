use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by graph construction, linear algebra, integration and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: vertex {unreachable} is not reachable from vertex 0")]
    Disconnected { unreachable: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix has complex eigenvalue {re} + {im}i")]
    ComplexSpectrum { re: f64, im: f64 },

    #[error("eigenvector extraction failed: {0}")]
    Eigenvectors(String),

    #[error("mode {mode} has non-positive eigenvalue {lambda:e}; the zero mode has no decay")]
    ZeroMode { mode: usize, lambda: f64 },

    #[error("state became non-finite at step {step}")]
    BlowUp { step: usize },

    #[error("trajectory has not settled: max |dα/dt| = {rate:e}")]
    NotSettled { rate: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible generator configuration: {0}")]
    Infeasible(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
