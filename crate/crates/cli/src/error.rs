use eenas_core::arch::ArchError;
use eenas_core::eval::EvalError;
use eenas_core::hwcost::HwError;
use eenas_core::nas::NasError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("audit: {0}")]
    Audit(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Hw(#[from] HwError),
    #[error(transparent)]
    Nas(#[from] NasError),
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Eval(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(format!("csv: {e}"))
    }
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Arch(_) => 2,
            CliError::Eval(_) | CliError::Nas(NasError::Eval(_)) => 3,
            CliError::Audit(_) => 4,
            _ => 1,
        }
    }
}
