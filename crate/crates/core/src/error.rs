use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("integration failed at interval {interval}, substep {substep}: non-finite state {state:?}")]
    IntegrationFailure {
        interval: usize,
        substep: usize,
        state: [f64; 3],
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("action {value} lies on or outside the bound [{lo}, {hi}] of dimension {dim}")]
    ActionOnBoundary { dim: usize, value: f64, lo: f64, hi: f64 },

    #[error("ill-conditioned data: {0}")]
    IllConditioned(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("dimension {dim} out of range 1..={max}")]
    DimensionOutOfRange { dim: usize, max: usize },

    #[error("rollouts were generated by parameter version {found}, expected {expected}")]
    MismatchedParameters { expected: u64, found: u64 },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Process exit code: 1 for numeric failures, 2 for usage, config and I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IntegrationFailure { .. }
            | Error::NonFinite(_)
            | Error::ActionOnBoundary { .. }
            | Error::IllConditioned(_)
            | Error::Numeric(_)
            | Error::MismatchedParameters { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }
}
