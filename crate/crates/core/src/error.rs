use thiserror::Error;

/// Errors produced anywhere in the laboratory.
///
/// Each variant belongs to one error class; the runner maps classes onto
/// process exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("Schwarzian is singular at {x} (|Df| = {deriv:e})")]
    Singularity { x: f64, deriv: f64 },

    #[error("bracket [{lo}, {hi}] does not contain a sign change")]
    Bracket { lo: f64, hi: f64 },

    #[error("precision: {0}")]
    Precision(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("cascade integrity at level {level}: {reason}")]
    Cascade { level: usize, reason: String },

    #[error("partition at level {level}: {reason}")]
    Partition { level: usize, reason: String },

    #[error("cylinder collapsed at depth {depth}; max usable depth is {max_usable}")]
    DepthLimit { depth: usize, max_usable: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mode: {0}")]
    Mode(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("query: {0}")]
    Query(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Query(_) | Error::Domain { .. } | Error::Mode(_) => "config",
            Error::Cascade { .. } | Error::Partition { .. } => "cascade",
            Error::Fit(_) | Error::InsufficientData(_) => "fit",
            Error::Io(_) => "io",
            Error::Singularity { .. }
            | Error::Bracket { .. }
            | Error::Precision(_)
            | Error::Numeric(_)
            | Error::DepthLimit { .. }
            | Error::DegenerateInput(_) => "numeric",
        }
    }

    /// Exit codes: config=2, numeric=3, cascade=4, fit=5. I/O failures use 1.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "config" => 2,
            "numeric" => 3,
            "cascade" => 4,
            "fit" => 5,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e.to_string()))
    }
}
