use std::fmt;

use layercast_core::Error as CoreError;

/// Failure class; selects the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, config, or input files.
    Usage,
    /// The constraint set (or power budget) cannot be met.
    Infeasible,
    /// A solver, root finder, or integrator failed.
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            Self::Infeasible => 3,
            Self::Numerical => 4,
            Self::Io => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Usage => "usage",
            Self::Infeasible => "infeasible",
            Self::Numerical => "numerical",
            Self::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.label(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::InvalidParameter { .. }
            | CoreError::DegenerateWeights
            | CoreError::DimensionMismatch { .. }
            | CoreError::EmptyFading
            | CoreError::TooManyLayers { .. } => ErrorKind::Usage,
            CoreError::Infeasible { .. } | CoreError::PowerDeficit { .. } => ErrorKind::Infeasible,
            _ => ErrorKind::Numerical,
        };
        Self { kind, message: e.to_string() }
    }
}
