use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or inconsistent inputs; nothing was computed.
    #[error("{message}")]
    Usage { code: &'static str, message: String },

    /// The computation ran and failed (certificate, corrector, divergence),
    /// or a report being aggregated records such a failure.
    #[error("{message}")]
    Numerical { code: &'static str, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage { code: "usage", message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => EXIT_USAGE,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage { code, .. } | CliError::Numerical { code, .. } => code,
            CliError::Io { .. } => "io",
        }
    }

    /// `error: code=<code> exit=<n> message=<text>` on one line.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error: code={} exit={} message={}", self.code(), self.exit_code(), message.trim())
    }
}

impl From<lossmanifold::Error> for CliError {
    fn from(e: lossmanifold::Error) -> Self {
        use lossmanifold::Error as E;
        let code = match &e {
            E::Contract(_) | E::DimensionMismatch { .. } => "invalid-input",
            E::NotOnManifold { .. } => "not-on-manifold",
            E::Singular { .. } => "singular",
            E::ProjectionFailure { .. } => "projection",
            E::Certificate { .. } => "certificate",
            E::Divergence { .. } => "divergence",
            E::Corrector { .. } => "corrector",
        };
        let message = e.to_string();
        if e.is_numerical() {
            CliError::Numerical { code, message }
        } else {
            CliError::Usage { code, message }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
