use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error(transparent)]
    Core(#[from] graphaug_core::Error),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` has not been run: {path} is missing (run `graphaug {stage}` first)")]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { file: file.into(), line, message: message.into() }
    }
}
