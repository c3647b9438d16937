use std::fmt;
use std::path::PathBuf;

/// A single rejected field of a scenario document.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid scenario:\n{}", format_fields(.0))]
    Validation(Vec<FieldError>),

    #[error("cannot parse scenario: {0}")]
    Parse(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(
        "phase solve did not converge after {iterations} Picard sweeps \
         (residual {residual:.3e}); dt/eps = {ratio:.3e} is too large for the Yosida term"
    )]
    PhaseNonConvergence {
        iterations: usize,
        residual: f64,
        ratio: f64,
    },

    #[error(
        "fixed-point iteration did not converge after {iterations} sweeps \
         (last residual {residual:.3e})"
    )]
    FixedPointNonConvergence { iterations: usize, residual: f64 },

    #[error("I/O error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
