use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point behind camera (depth {0})")]
    BehindCamera(f64),
    #[error("mesh operation failed: {0}")]
    MeshOp(String),
    #[error("region {region}: {msg}")]
    Region { region: u32, msg: String },
    #[error("no valid cut found for region {0}")]
    NoValidCut(u32),
    #[error("subdivision escalation exhausted after level {0}")]
    EscalationExhausted(u32),
    #[error("consistency validation failed: {0} violation(s)")]
    ValidationFailed(usize),
    #[error("visibility propagation inconsistent: {0}")]
    Visibility(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
