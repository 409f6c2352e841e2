use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid size mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("incompatible fields: {0}")]
    Incompatible(String),

    #[error("singular multiplier at wavevector index {mode:?} (coefficient magnitude {magnitude:e})")]
    SingularMode { mode: Vec<i64>, magnitude: f64 },

    #[error("ellipticity violated at grid point {point:?}: smallest eigenvalue {eigenvalue:e}")]
    Ellipticity { point: Vec<usize>, eigenvalue: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("corrector solve failed at order {order}, index {index:?}: {source}")]
    Corrector {
        order: usize,
        index: Vec<usize>,
        source: alloc::boxed::Box<Error>,
    },

    #[error("symbol evaluation failed at frequency {xi:?}: {source}")]
    Symbol {
        xi: Vec<f64>,
        source: alloc::boxed::Box<Error>,
    },

    #[error("translation {z:?}: {source}")]
    Translation {
        z: Vec<f64>,
        source: alloc::boxed::Box<Error>,
    },

    #[error("inadmissible frequency {0:?}: must be nonzero and strictly inside the first dual cell")]
    Inadmissible(Vec<f64>),

    #[error("rank-deficient design matrix ({rank} of {columns} columns resolved); add more rays or radii")]
    RankDeficient { rank: usize, columns: usize },

    #[error("symbol band violated at {xi:?}: Re B = {value:e} outside [{lower:e}, {upper:e}]")]
    Band {
        xi: Vec<f64>,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("{what} exceeds guard ({value} > {limit})")]
    Guard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_corrector(self, order: usize, index: &[usize]) -> Self {
        Error::Corrector {
            order,
            index: index.to_vec(),
            source: alloc::boxed::Box::new(self),
        }
    }

    /// True for failures that come from an iterative solver rather than from input validation.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NoConvergence { .. } | Error::Band { .. } => true,
            Error::Corrector { source, .. }
            | Error::Symbol { source, .. }
            | Error::Translation { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
