use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("eigenvalue with modulus {modulus} lies within {tol} of the unit circle")]
    UnitRootAmbiguity { modulus: f64, tol: f64 },

    #[error("basis matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularBasis { condition: f64 },

    #[error("coefficient matrix has complex eigenvalues")]
    ComplexSpectrum,

    #[error("coefficient matrix is not diagonalizable")]
    Defective,

    #[error("degrees of freedom must exceed 2, got {0}")]
    InvalidDof(f64),

    #[error("process is not purely causal ({n2} eigenvalues outside the unit circle)")]
    NotCausal { n2: usize },

    #[error("series of length {len} is too short: {needed}")]
    LengthMismatch { len: usize, needed: String },

    #[error("lag {lag} too large for sample of {len} rows")]
    LagTooLarge { lag: usize, len: usize },

    #[error("weight matrix is numerically singular")]
    SingularWeight,

    #[error("objective is not finite")]
    NonFinite,

    #[error("objective returned a non-finite value and no finite step could be found")]
    NonFiniteObjective,

    #[error("regression design matrix is singular")]
    SingularDesign,

    #[error("estimated matrix is singular and cannot be inverted")]
    SingularEstimate,

    #[error("{0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {rows} usable rows for {cols} columns; need more than {min}")]
    TooShort {
        path: PathBuf,
        rows: usize,
        cols: usize,
        min: usize,
    },

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
