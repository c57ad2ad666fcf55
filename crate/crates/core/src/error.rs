use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("problem too large for dense oracle: {unknowns} unknowns exceeds cap {cap}")]
    OracleTooLarge { unknowns: usize, cap: usize },

    #[error("target SNR {target_db} dB unattainable: {reason}")]
    UnattainableSnr { target_db: f64, reason: String },

    #[error("unknown denoiser kind `{0}`")]
    UnknownDenoiser(String),

    #[error("diverged: {0}")]
    Diverged(String),
}
