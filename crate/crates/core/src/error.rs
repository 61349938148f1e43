use std::path::PathBuf;

use crate::pose::PoseSE3;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("query on an empty spatial index")]
    EmptyIndex,

    #[error("azimuth undefined for a point on the z-axis")]
    UndefinedAzimuth,

    #[error("linearization produced no correspondences")]
    DegenerateLinearization,

    #[error("non-finite pose update after {iterations} iterations")]
    Divergence { last_pose: PoseSE3, iterations: usize },

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("degenerate line fit: {0}")]
    DegenerateFit(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
