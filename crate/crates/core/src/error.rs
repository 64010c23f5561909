use thiserror::Error;

/// Failure classes shared by every module. The CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("measure support error: {0}")]
    MeasureSupport(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Stable short name used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Domain(_) => "domain",
            Error::MeasureSupport(_) => "measure_support",
            Error::Resource(_) => "resource",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Json(_) => "schema",
        }
    }

    /// 2 input, 3 resource, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resource(_) => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}
