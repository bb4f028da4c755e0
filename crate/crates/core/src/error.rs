use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid model space: {0}")]
    ModelSpace(String),

    #[error("invalid model `{model}`: {reason}")]
    Model { model: String, reason: String },

    #[error("likelihood {value} for model {model} is outside (0, 1)")]
    Likelihood { model: usize, value: f64 },

    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },

    #[error("stream exhausted after {got} observations, {needed} required")]
    StreamExhausted { needed: usize, got: usize },

    #[error("model {0} has no ledger entry")]
    MissingLedger(usize),

    #[error("invalid search distribution: {0}")]
    Search(String),

    #[error("invalid trial schedule: {0}")]
    Schedule(String),

    #[error("zero probability assigned to a realized outcome at step {step}")]
    ZeroProbability { step: usize },

    #[error("probability {value} at step {step} is outside (0, 1]")]
    Probability { step: usize, value: f64 },

    #[error("check not applicable: {0}")]
    NotApplicable(String),

    #[error("state count {count} exceeds ceiling {ceiling}")]
    StateCeiling { count: u128, ceiling: usize },

    #[error("chain is not irreducible: {components} strongly connected components, {detail}")]
    Reducible { components: usize, detail: String },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate partition: {0}")]
    Partition(String),

    #[error("instance mismatch: {0}")]
    InstanceMismatch(String),

    #[error("invalid generator: {0}")]
    Generator(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("causality violation at step {step}: {detail}")]
    Causality { step: usize, detail: String },

    #[error("record integrity: {0}")]
    Integrity(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
