use thiserror::Error;

/// Error type shared across the tuning engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A table or column referenced somewhere does not exist in the catalog,
    /// or an index definition is malformed.
    #[error("schema error: {0}")]
    Schema(String),

    /// SQL text could not be parsed. `position` is a byte offset into the
    /// statement text.
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    /// The statement uses a construct outside the supported grammar.
    #[error("unsupported construct at byte {position}: {construct}")]
    Unsupported { position: usize, construct: String },

    /// A what-if call was requested but the armed call budget would be exceeded.
    #[error("what-if call budget exhausted")]
    BudgetExhausted,

    /// An engine capability required by the operation is not available.
    #[error("capability not supported: {0}")]
    Capability(String),

    /// Not enough data to train a model or fit a forecaster.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A user-supplied value or request is invalid or self-contradictory.
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    /// A search guard tripped (e.g. the exhaustive enumerator refusing a
    /// space that is too large to scan).
    #[error("guard violation: {0}")]
    Guard(String),

    /// A tuning-plan node failed; wraps the underlying error with the node id.
    #[error("plan node '{node}' failed: {source}")]
    PlanNode {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
