use thiserror::Error;

#[derive(Debug, Error)]
pub enum SrlError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch for `{name}`: {left:?} vs {right:?}")]
    Shape {
        name: String,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("replay buffer holds {available} transitions, cannot sample {requested} (warm-up incomplete)")]
    InsufficientData { available: usize, requested: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("imagined state became non-finite at rollout step {step}")]
    RolloutDiverged { step: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("zero-norm latent vector at horizon step {step}")]
    ZeroNorm { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("environment: {0}")]
    Env(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SrlError>;

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SrlError::Dimension {
            what: what.to_string(),
            expected,
            got,
        })
    }
}
