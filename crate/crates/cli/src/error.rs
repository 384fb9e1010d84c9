//! CLI error classes and the stable exit-code contract.

use std::fmt;

/// Exit codes: 0 success, 2 input error, 3 non-convergence, 4
/// identification, 5 economic validity.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    NonConvergence(String),
    Identification(String),
    EconomicValidity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Identification(_) => 4,
            CliError::EconomicValidity(_) => 5,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m)
            | CliError::NonConvergence(m)
            | CliError::Identification(m)
            | CliError::EconomicValidity(m) => write!(f, "{m}"),
        }
    }
}

impl From<choiceforge::Error> for CliError {
    fn from(e: choiceforge::Error) -> Self {
        use choiceforge::Error;
        match e {
            Error::Schema(_) | Error::Input(_) | Error::Collinearity { .. } => {
                CliError::Input(e.to_string())
            }
            Error::Separation { .. } => CliError::NonConvergence(e.to_string()),
            Error::Identification { .. } | Error::Singular(_) => {
                CliError::Identification(e.to_string())
            }
            Error::EconomicValidity(_) => CliError::EconomicValidity(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("malformed report file: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
