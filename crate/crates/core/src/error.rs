use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported degree l = {l} (maximum {max})")]
    UnsupportedDegree { l: usize, max: usize },

    #[error("invalid atom index {index} for a system of {natoms} atoms")]
    AtomIndex { index: usize, natoms: usize },

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("element Z = {0} is not covered")]
    UnknownElement(u32),

    #[error("featurization failed: {0}")]
    Featurization(String),

    #[error("invalid normalization statistics: {0}")]
    Statistics(String),

    #[error("degenerate centroid: total predicted charge {0:e} is too close to zero")]
    DegenerateCentroid(f64),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset line {line}: {msg}")]
    Dataset { line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
