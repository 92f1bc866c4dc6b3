use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] ceei_core::Error),
    #[error("{0} acceptance rows failed")]
    Acceptance(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ceei_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Read { .. } => 2,
            CliError::Solver(E::Domain(_) | E::Config(_) | E::Unsupported(_) | E::NotApplicable(_)) => 2,
            CliError::Solver(E::NonConvergence { .. }) => 3,
            CliError::Acceptance(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
