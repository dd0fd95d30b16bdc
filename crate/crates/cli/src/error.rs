use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] magecho::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Some `verify` checks failed; details were already printed.
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    /// 1 for numerical failures, 2 for everything the user can fix in the inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Verification(_) => 1,
            _ => 2,
        }
    }
}
