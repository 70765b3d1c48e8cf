use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("p = {p} and q = {q} are not coprime")]
    NotCoprime { p: u32, q: u32 },

    #[error("no difference decomposition: {0}")]
    NoSolution(String),

    #[error("received block is zero to within the detection threshold")]
    AllZeroReceived,

    #[error("decomposition failed at step {step}: {reason}")]
    DecompositionFailed { step: usize, reason: String },

    #[error("pivot tap |h_r| = {magnitude:e} is below threshold {threshold:e}")]
    NearZeroPivot { magnitude: f64, threshold: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signal matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("codebook of {size} codewords exceeds the enumeration cap of {cap}")]
    ConfigTooLarge { size: u128, cap: u128 },

    #[error("insufficient statistics: {usable} usable SNR points, need at least {required}")]
    InsufficientStatistics { usable: usize, required: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
