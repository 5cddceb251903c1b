use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergedTraining { epoch: usize },

    #[error("non-physical plant state: {0}")]
    NonPhysical(String),

    #[error("point lies outside the domain: {0}")]
    OutsideDomain(String),

    #[error("empty domain")]
    EmptyDomain,

    #[error("rank-deficient least-squares fit on region {0}")]
    RankDeficient(String),

    #[error("region {region} is not applicable to the measured state")]
    RegionNotApplicable { region: usize },

    #[error("quadratic term is not positive definite")]
    NotPositiveDefinite,

    #[error("no feasible candidate control sequence")]
    NoCandidates,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("timed out waiting for {0}")]
    Timeout(String),

    #[error("transport error during {context}: {source}")]
    Transport {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
