use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("nonzero packed entry at row {row} maps to column {column} outside [0, {width})")]
    Structural {
        row: usize,
        column: usize,
        width: usize,
    },

    #[error("term at t={t} returned {what} of length {got}, declared {expected}")]
    TermShape {
        t: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("initial point is not strictly feasible; violated inequalities: {indices:?}")]
    Infeasible { indices: Vec<usize> },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("invalid option {name}: {reason}")]
    InvalidOption { name: String, reason: String },

    #[error("broadcast shape {rows}x{cols} is not admissible for a {dim}-dimensional task over {steps} time slices")]
    Broadcast {
        rows: usize,
        cols: usize,
        dim: usize,
        steps: usize,
    },

    #[error("invalid problem configuration: {0}")]
    Config(String),

    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
