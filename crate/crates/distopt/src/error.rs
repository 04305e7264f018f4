use std::io;
use std::path::{Path, PathBuf};

use distopt_core::optimizer::ConfigIssue;
use distopt_core::{BuildError, OptError};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Solver,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Solver => 3,
            ErrorKind::Io => 4,
        }
    }
}

/// Failure of a command. Serializes to the machine-readable record printed
/// on stderr.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<Issue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl From<ConfigIssue> for Issue {
    fn from(i: ConfigIssue) -> Self {
        Issue {
            field: i.field,
            message: i.message,
        }
    }
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
            issues: Vec::new(),
            path: None,
        }
    }

    pub fn invalid(issues: Vec<Issue>) -> Self {
        let joined: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        Self {
            issues,
            ..Self::config(format!("invalid configuration: {}", joined.join("; ")))
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Solver,
            ..Self::config(message)
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("{}: {err}", path.display()),
            issues: Vec::new(),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line JSON record, `{"error": {...}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::InvalidConfig(issues) => CliError::invalid(issues.into_iter().map(Issue::from).collect()),
            OptError::Observer(msg) => Self {
                kind: ErrorKind::Io,
                ..Self::config(msg)
            },
            other => CliError::solver(other.to_string()),
        }
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::LayerMismatch { .. } | BuildError::InvalidInactiveRatio(_) | BuildError::Mesh(_) => {
                CliError::config(e.to_string())
            }
            BuildError::ProfileLength { .. } | BuildError::ProfileStation { .. } => CliError::config(e.to_string()),
            other => CliError::solver(other.to_string()),
        }
    }
}
