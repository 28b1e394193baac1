use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Compute,
    Io,
    Verification,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Compute => "compute",
            ErrorKind::Io => "io",
            ErrorKind::Verification => "verification",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage | ErrorKind::Config => 2,
            ErrorKind::Compute | ErrorKind::Io | ErrorKind::Verification => 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    /// One-line JSON record written to stderr.
    pub fn record(&self, command: Option<&str>) -> String {
        json!({
            "error": {
                "kind": self.kind.as_str(),
                "message": self.message,
                "command": command,
                "exit_code": self.kind.exit_code(),
            }
        })
        .to_string()
    }
}

impl From<instablab::Error> for CliError {
    fn from(e: instablab::Error) -> Self {
        let kind = match e {
            instablab::Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Compute,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, e.to_string())
    }
}
