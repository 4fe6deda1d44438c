use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    InvalidRecord { row: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("evidence network is disconnected: {0}")]
    Disconnected(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown study `{0}`")]
    UnknownStudy(String),

    #[error("unknown treatment `{0}`")]
    UnknownTreatment(String),

    #[error("study {study}: {message}")]
    Fit { study: String, message: String },

    #[error("Cox fit did not converge: {0}")]
    NonConvergence(String),

    #[error("monotone likelihood: coefficient {index} diverges")]
    MonotoneLikelihood { index: usize },

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("constant covariate: {0}")]
    ConstantCovariate(String),

    #[error("{0}")]
    InsufficientData(String),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("covariance for study `{study}` is not positive definite")]
    NotPositiveDefinite { study: String },

    #[error("model specification: {0}")]
    Spec(String),

    #[error("MCMC: {0}")]
    Sampler(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::InvalidRecord { .. }
            | Error::MissingColumn(_)
            | Error::Config(_)
            | Error::Disconnected(_)
            | Error::InvalidNetwork(_)
            | Error::UnknownStudy(_)
            | Error::UnknownTreatment(_)
            | Error::NonPositiveTime(_)
            | Error::Spec(_)
            | Error::Manifest(_)
            | Error::Csv(_)
            | Error::Json(_) => 1,
            Error::Fit { .. }
            | Error::NonConvergence(_)
            | Error::MonotoneLikelihood { .. }
            | Error::SingularInformation
            | Error::ConstantCovariate(_)
            | Error::InsufficientData(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Sampler(_) => 2,
            Error::Diagnostics(_) => 3,
        }
    }
}
