use std::fmt;

use klay_core::bench::CompileError;
use klay_core::{EvalError, KlayFormatError, LayerizeError, ParseError};

/// Exit code of a successful run.
pub const EXIT_OK: u8 = 0;
/// `check` found a disagreement with an oracle.
pub const EXIT_MISMATCH: u8 = 1;
/// Malformed input, unsupported option combination or shape mismatch.
pub const EXIT_INVALID: u8 = 2;
/// A file could not be read or written.
pub const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn invalid(msg: impl fmt::Display) -> Self {
        CliError::Invalid(msg.to_string())
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            CliError::Invalid(m) => CliError::Invalid(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<KlayFormatError> for CliError {
    fn from(e: KlayFormatError) -> Self {
        match e {
            KlayFormatError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<LayerizeError> for CliError {
    fn from(e: LayerizeError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<CompileError> for CliError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
