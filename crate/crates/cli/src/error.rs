use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema: {0}")]
    Schema(String),
    /// the file parsed but describes an invalid object
    #[error("input: {0}")]
    Input(fake_annulus::Error),
    /// failure while running the requested computation
    #[error("{0}")]
    Run(fake_annulus::Error),
}

impl CliError {
    pub fn input(e: fake_annulus::Error) -> Self {
        CliError::Input(e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Schema(_) | CliError::Input(_) => 2,
            CliError::Run(e) if e.is_precision() => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl From<fake_annulus::Error> for CliError {
    fn from(e: fake_annulus::Error) -> Self {
        CliError::Run(e)
    }
}
