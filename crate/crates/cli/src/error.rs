use tempora_core::curriculum::CurriculumError;
use tempora_core::eval::EvalError;
use tempora_core::grpo::GrpoError;
use tempora_core::jsonl::JsonlError;
use tempora_core::policy::PolicyError;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input data or configuration. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Filesystem or process failure. Exit code 2.
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    /// A library invariant was violated. Exit code 3.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io { .. } => 2,
            Self::Internal(_) => 3,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io(source) => Self::io("reading input", source),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Shape(_) => Self::Internal(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Validation(e.to_string())
            }
        })*
    };
}

validation_from!(EvalError, CurriculumError, GrpoError);
