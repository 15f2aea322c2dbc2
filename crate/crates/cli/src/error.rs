use thiserror::Error;

/// Failure classes of the command-line front-end, each with its own exit
/// status so scripts can tell a bad config from a numerical failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config `{path}`: {source}")]
    ConfigRead { path: String, source: std::io::Error },
    #[error("config field `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error(transparent)]
    Engine(#[from] lsmc_pde::Error),
    #[error("cannot write `{path}`: {source}")]
    Output { path: String, source: std::io::Error },
    #[error("report: {0}")]
    Report(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use lsmc_pde::Error as E;
        match self {
            CliError::ConfigRead { .. } => 3,
            CliError::Schema { .. } => 4,
            CliError::Engine(e) => match e {
                E::Parameter { .. } => 5,
                E::Configuration(_) => 6,
                E::Numeric(_) | E::DegenerateDesign { .. } | E::Truncation { .. } => 7,
                E::Io(_) | E::Format(_) => 8,
            },
            CliError::Output { .. } => 8,
            CliError::Report(_) => 9,
        }
    }
}
