use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no key resolved for table {table}; supply a primary-key hint")]
    UnresolvedKey { table: String },

    #[error("no key-relation path between {from} and {to}")]
    Unpathable { from: String, to: String },

    #[error("invalid artifact view: {0}")]
    InvalidView(String),

    #[error("transition {0} is not enabled")]
    NotEnabled(String),

    #[error("invalid petri net: {0}")]
    InvalidNet(String),

    #[error("cannot mine an empty log")]
    EmptyLog,

    #[error("translation error: {0}")]
    Translation(String),

    #[error("invalid GSM model: {0}")]
    InvalidModel(String),

    #[error("GSM cascade exceeded {0} micro-steps")]
    Divergence(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("xml error: {0}")]
    Xml(String),
}
