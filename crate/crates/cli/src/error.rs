use std::fmt;
use std::process::ExitCode;

use falldet::detector::RunError;
use falldet::pose::{ManifestError, StreamError};
use falldet::sweep::SweepError;
use falldet::wire::ErrorCode;
use falldet::{ConfigError, EvalError};
use falldet_client::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    Config,
    Manifest,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Io => 2,
            Kind::Config => 3,
            Kind::Manifest => 4,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl fmt::Display) -> Self {
        CliError {
            kind,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        CliError::new(Kind::Io, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(Kind::Config, e)
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::io(e)
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Detector(falldet::DetectorError::Config(c)) => c.into(),
            other => CliError::io(other),
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Unreadable { .. } => CliError::io(e),
            ManifestError::Invalid(_) => CliError::new(Kind::Manifest, e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_manifest_error() {
            CliError::new(Kind::Manifest, e)
        } else {
            CliError::io(e)
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Eval(inner) => inner.into(),
            other => CliError::new(Kind::Config, other),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let kind = match e.code() {
            Some(ErrorCode::InvalidConfig) => Kind::Config,
            Some(ErrorCode::Manifest) => Kind::Manifest,
            _ => Kind::Io,
        };
        CliError::new(kind, e)
    }
}
