use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no acceptable framework after {attempts} draws")]
    RejectionBudget { attempts: usize },

    #[error(transparent)]
    Core(#[from] subrigid::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status: 2 when rigidity was lost, 3 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(subrigid::Error::RigidityLost { .. }) => 2,
            CliError::InvalidConfig(_) | CliError::Core(subrigid::Error::InvalidParams(_)) => 3,
            _ => 1,
        }
    }
}
