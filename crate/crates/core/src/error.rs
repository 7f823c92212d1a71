use thiserror::Error;

use crate::graph::LaplacianKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node index {index} out of range for a graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("edge ({i}, {j}) has non-positive or non-finite weight {weight}")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("self-loop on node {0}; self-loops enter only through the SymNormalizedSelfLoops Laplacian")]
    SelfLoop(usize),

    #[error("node {node} has zero degree, the {kind:?} Laplacian is undefined")]
    ZeroDegree { node: usize, kind: LaplacianKind },

    #[error("graph is disconnected ({components} components); the kernel projector is not rank one")]
    Disconnected { components: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix of order {n} exceeds the dense eigendecomposition limit {limit}; use the Chebyshev strategy")]
    DenseLimit { n: usize, limit: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),

    #[error("fractional order s = {0} outside (0, 1]")]
    FractionalOrder(f64),

    #[error("unbounded: source has nonzero kernel component (|PF| = {0:e})")]
    UnboundedSource(f64),

    #[error("time step {dt} violates the forward Euler stability bound {bound}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("operation not supported by the {strategy} strategy: {op}")]
    Unsupported { strategy: &'static str, op: &'static str },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::FractionalOrder(_)
            | Error::UnstableStep { .. }
            | Error::Unsupported { .. } => 1,
            Error::IndexOutOfRange { .. }
            | Error::InvalidWeight { .. }
            | Error::SelfLoop(_)
            | Error::ZeroDegree { .. }
            | Error::Disconnected { .. }
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::DenseLimit { .. }
            | Error::NotSymmetric(_)
            | Error::NotPositiveSemiDefinite(_)
            | Error::UnboundedSource(_)
            | Error::CgNotConverged { .. } => 3,
        }
    }
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::FractionalOrder(s))
    }
}

pub(crate) fn check_rows(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{expected} rows"),
            found: format!("{found} rows"),
        })
    }
}
