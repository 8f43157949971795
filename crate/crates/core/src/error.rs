use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch on axis `{axis}` (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: expected rank {expected}, found rank {found}")]
    Rank {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("style layout mismatch: {0}")]
    Layout(String),

    #[error("dataset has a single class ({label:+}); a separating hyperplane needs both")]
    SingleClass { label: i8 },

    #[error("undefined cosine: {0} has zero norm")]
    ZeroVector(&'static str),

    #[error("non-finite {what} while optimizing layer {layer}, step {step}")]
    NonFinite {
        what: &'static str,
        layer: usize,
        step: usize,
    },

    #[error("space mismatch: expected a {expected} hyperplane, found {found}")]
    Space {
        expected: crate::directions::Space,
        found: crate::directions::Space,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("missing artifact: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
