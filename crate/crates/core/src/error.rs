use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("Beta moment matching infeasible at index {index}: mean {mean}, variance {variance}")]
    MomentMatching {
        index: usize,
        mean: f64,
        variance: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive semidefinite (jitter up to {max_jitter:e} exhausted)")]
    Decomposition { max_jitter: f64 },

    #[error(
        "NNLS did not converge after {iterations} iterations (max KKT violation {kkt_violation:e})"
    )]
    SolverNonConvergence {
        iterations: usize,
        kkt_violation: f64,
    },

    #[error("invalid heat record {heat_index}: {reason}")]
    InvalidHeat { heat_index: u64, reason: String },

    #[error("invalid partition configuration at heat {heat_index}: denominator {denominator}")]
    Partition { heat_index: u64, denominator: f64 },

    #[error("trace and heats are misaligned: {0}")]
    Misaligned(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("{} parse error(s) in {}:\n{}", .errors.len(), .path.display(), format_lines(.errors))]
    Parse {
        path: PathBuf,
        errors: Vec<LineError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error on {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::MomentMatching { .. } => "moment_matching",
            Error::Numerical(_) => "numerical",
            Error::Decomposition { .. } => "decomposition",
            Error::SolverNonConvergence { .. } => "solver",
            Error::InvalidHeat { .. } => "invalid_heat",
            Error::Partition { .. } => "partition",
            Error::Misaligned(_) => "misaligned",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json { .. } => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

/// One itemized problem found while parsing an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number in the file (header is line 1).
    pub line: u64,
    pub message: String,
}

fn format_lines(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| format!("  line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
