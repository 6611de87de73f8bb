use std::fmt;

use leafstream::data::DataError;
use leafstream::ensemble::EnsembleError;
use leafstream::inspect::InspectError;
use leafstream::nn::NnError;
use leafstream::persist::PersistError;
use leafstream::streams::StreamError;
use leafstream::tree::TreeError;

/// Failure of a subcommand, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files. Exit code 2.
    Usage(String),
    /// Deliberate-interpretation refusal. Exit code 3.
    Refusal(String),
    /// Divergence or non-finite numbers. Exit code 4.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Refusal(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Refusal(m) => write!(f, "interpretation refused: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Diverged { .. } | NnError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Nn(e) => e.into(),
            EnsembleError::Tree(e) => e.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Ensemble(e) => e.into(),
            StreamError::Nn(e) => e.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Nn(e) => e.into(),
            DataError::Ensemble(e) => e.into(),
            DataError::Stream(e) => e.into(),
            DataError::SamplingExhausted { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<InspectError> for CliError {
    fn from(e: InspectError) -> Self {
        match e {
            InspectError::Unreliable { .. } | InspectError::NoPositives { .. } => CliError::Refusal(e.to_string()),
            InspectError::NonFinite(_) => CliError::Numeric(e.to_string()),
            InspectError::Tree(e) => e.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}
