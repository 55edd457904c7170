use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("missing {0}")]
    Missing(String),
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("json error")]
    Json(#[from] serde_json::Error),
    #[error("csv error")]
    Csv(#[from] csv::Error),
}
