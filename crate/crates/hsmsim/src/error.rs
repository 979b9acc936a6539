use std::io;
use std::path::PathBuf;

use hsmsim_core::dialect::DialectError;
use hsmsim_core::netmodel::NetError;
use hsmsim_core::protocols::ProtocolError;
use hsmsim_core::storage::TapeError;
use hsmsim_core::testbed::TestbedError;
use hsmsim_core::xrsl::{ParseError, StageInError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{scenario}: `{key}`: {message}")]
    Invalid {
        scenario: String,
        key: String,
        message: String,
    },
    #[error("duplicate scenario id `{0}`")]
    DuplicateId(String),
    #[error("unknown canned scenario `{0}`")]
    UnknownCanned(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("{scenario}: {source}")]
    Model {
        scenario: String,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Failures raised by the simulation models themselves.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error("job description: {0}")]
    Xrsl(#[from] ParseError),
    #[error(transparent)]
    StageIn(#[from] StageInError),
}

impl SimError {
    pub fn invalid(scenario: &str, key: &str, message: impl Into<String>) -> Self {
        SimError::Invalid {
            scenario: scenario.into(),
            key: key.into(),
            message: message.into(),
        }
    }
}
