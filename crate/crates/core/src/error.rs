use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// The variants line up with the exit-code classes used by the command-line
/// tool (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("format error in section `{section}`: {message}")]
    Format { section: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn format(section: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            section: section.into(),
            message: msg.into(),
        }
    }

    /// Short machine-readable class name used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Contract(_) => "contract",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// The message without the class name.
    pub fn detail(&self) -> String {
        match self {
            Error::Dimension(m) | Error::Contract(m) | Error::Numeric(m) | Error::Data(m) | Error::Config(m) => m.clone(),
            Error::Parse { line, message } => format!("line {line}: {message}"),
            Error::Format { section, message } => format!("section `{section}`: {message}"),
            Error::Io(e) => e.to_string(),
        }
    }

    /// 2 usage/config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Format { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Dimension(_) | Error::Contract(_) | Error::Io(_) => 1,
        }
    }

    /// Prefix a message with extra context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{ctx}: {message}"),
            },
            Error::Format { section, message } => Error::Format {
                section,
                message: format!("{ctx}: {message}"),
            },
            Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
