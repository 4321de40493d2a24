use thiserror::Error;

/// Failures surfaced by the command-line driver.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("goal field could not be computed: {0}")]
    GoalField(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(ambidec_core::Error),
}

impl CliError {
    /// Process exit status: 2 for goal-field failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GoalField(_) => 2,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<ambidec_core::Error> for CliError {
    fn from(e: ambidec_core::Error) -> Self {
        match e {
            ambidec_core::Error::GoalField(msg) => CliError::GoalField(msg),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
