use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("path enumeration exceeded the cap of {cap} paths")]
    PathLimit { cap: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("no feasible path")]
    NoFeasiblePath,

    #[error("label error: {0}")]
    Label(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 2 = invalid input, 3 = infeasible computation, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGeometry(_)
            | Error::Topology(_)
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Integrity(_)
            | Error::Label(_)
            | Error::Coverage(_) => 2,
            Error::PathLimit { .. }
            | Error::NoFeasiblePath
            | Error::Range(_)
            | Error::Generation(_) => 3,
            Error::Io(_) => 1,
        }
    }
}
