//! Library side of the `gaplm` command-line tool.

pub mod config;
pub mod data;
pub mod output;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 config, 3 data, 4 numerical; i/o problems count as data errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<gaplm_core::Error> for CliError {
    fn from(e: gaplm_core::Error) -> Self {
        use gaplm_core::Error as E;
        match e {
            E::Spec(_) | E::InvalidArgument(_) => CliError::Config(e.to_string()),
            E::SingularFit(_) => CliError::Numerical(e.to_string()),
            E::Domain(_) | E::DegenerateRange(_) | E::DegenerateColumn { .. } | E::DimensionMismatch { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
