use std::fmt;

use thiserror::Error;

/// Pipeline stage an error was raised in, preserved through propagation so
/// front ends can report where a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Partial,
    ReducedForm,
    Estimate,
    Wald,
    NullTransform,
    Simulate,
    ConfidenceSet,
    Config,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Partial => "partial_out",
            Stage::ReducedForm => "reduced_form",
            Stage::Estimate => "estimate",
            Stage::Wald => "wald",
            Stage::NullTransform => "null_transform",
            Stage::Simulate => "simulate",
            Stage::ConfidenceSet => "confidence_set",
            Stage::Config => "config",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("missing value at row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },
    #[error("non-numeric value '{value}' at row {row}, column '{column}'")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} is rank deficient (smallest/largest eigenvalue ratio {ratio:.3e})")]
    RankDeficient { what: String, ratio: f64 },
    #[error("{0} is singular")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("[{stage}] {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Innermost stage label, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::InStage { stage, source } => source.stage().or(Some(*stage)),
            _ => None,
        }
    }

    /// Error with every stage wrapper removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InStage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::MissingColumn(_) => "missing_column",
            Error::MissingValue { .. } => "missing_value",
            Error::NonNumeric { .. } => "non_numeric",
            Error::Dimension(_) => "dimension",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Singular(_) => "singular",
            Error::Config(_) => "config",
            Error::Unsupported(_) => "unsupported",
            Error::Numerical(_) => "numerical",
            Error::InStage { .. } => unreachable!(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            // keep the innermost label
            e @ Error::InStage { .. } => e,
            e => Error::InStage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
