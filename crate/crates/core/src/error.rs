use thiserror::Error;

/// Errors raised while building, assembling, or evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot lift `{expr}`: {reason}")]
    Lift { expr: String, reason: String },

    #[error("ill-posed LFT: I - M22*Delta is singular (reciprocal condition {rcond:.3e}) {context}")]
    IllPosed { rcond: f64, context: String },

    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("missing value for parameter `{0}`")]
    MissingParam(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("gimbal lock: |cos(pitch)| = {cos_pitch:.3e} about the y axis of the xyz sequence")]
    GimbalLock { cos_pitch: f64 },

    #[error("singular {what}")]
    Singular { what: String },

    #[error("role mismatch: expected {expected}, got {got}")]
    RoleMismatch { expected: String, got: String },

    #[error("frame mismatch: expected `{expected}`, got `{got}`")]
    FrameMismatch { expected: String, got: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("equilibrium residual {residual:.3e} exceeds {tolerance:.1e} ({context})")]
    Trim {
        residual: f64,
        tolerance: f64,
        context: String,
    },

    #[error("{section}: {field}: {message}")]
    Schema {
        section: String,
        field: String,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub(crate) fn schema(
        section: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            section: section.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
