use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid node features: {0}")]
    InvalidFeature(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty graph: {0}")]
    EmptyGraph(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generator could not satisfy its constraints: {0}")]
    Infeasible(String),

    #[error("undefined transform: {0}")]
    UndefinedTransform(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("parameter `{0}` not found")]
    MissingParameter(String),
}
