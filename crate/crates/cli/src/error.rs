use std::fmt;

use hepacut_core::Error as CoreError;

/// Failure class, which fixes the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Data => 3,
            FailureKind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError {
            kind: FailureKind::Config,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        CliError {
            kind: FailureKind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn numerical(msg: impl fmt::Display) -> Self {
        CliError {
            kind: FailureKind::Numerical,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Prefix the message, keeping the failure class.
    pub fn context(self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        CliError {
            kind: self.kind,
            error: self.error.context(what),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

pub fn classify(e: &CoreError) -> FailureKind {
    match e {
        CoreError::InvalidParameter(_) => FailureKind::Config,
        CoreError::Degenerate(_) => FailureKind::Numerical,
        CoreError::Io { .. }
        | CoreError::Header { .. }
        | CoreError::UnsupportedElementType(_)
        | CoreError::LengthMismatch { .. }
        | CoreError::InvalidDims(_)
        | CoreError::ShapeMismatch(_)
        | CoreError::EmptyRegion(_)
        | CoreError::Format { .. } => FailureKind::Data,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError {
            kind: classify(&e),
            error: e.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a description to core errors.
pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> CliResult<T>;
}

impl<T> Context<T> for hepacut_core::Result<T> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> CliResult<T> {
        self.map_err(|e| CliError::from(e).context(what))
    }
}
