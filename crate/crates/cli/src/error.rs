//! Failure classes and their exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("cache corruption: {0}")]
    CacheCorrupt(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status; each failure class has its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Grid(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::CacheCorrupt(_) => 5,
            CliError::Numerical(_) => 6,
            CliError::Io(_) | CliError::Csv(_) => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Grid(_) => "grid",
            CliError::Convergence(_) => "convergence",
            CliError::CacheCorrupt(_) => "cache-corrupt",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) | CliError::Csv(_) => "io",
        }
    }

    /// Copy for each row that one shared failure invalidates.
    pub fn duplicate(&self) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(m.clone()),
            CliError::Grid(m) => CliError::Grid(m.clone()),
            CliError::Convergence(m) => CliError::Convergence(m.clone()),
            CliError::CacheCorrupt(m) => CliError::CacheCorrupt(m.clone()),
            CliError::Numerical(m) => CliError::Numerical(m.clone()),
            CliError::Io(e) => CliError::Io(std::io::Error::new(e.kind(), e.to_string())),
            CliError::Csv(e) => CliError::Io(std::io::Error::other(e.to_string())),
        }
    }

    /// Single-line form for stderr: `error: code=<n> kind=<kind> message="<text>"`.
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error: code={} kind={} message=\"{msg}\"", self.exit_code(), self.kind())
    }
}

impl From<dicke_stark::Error> for CliError {
    fn from(e: dicke_stark::Error) -> Self {
        match e {
            dicke_stark::Error::NotConverged { .. } | dicke_stark::Error::Truncation(_) => {
                CliError::Convergence(e.to_string())
            }
            dicke_stark::Error::InvalidParameter(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
