use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model '{name}': {reason}")]
    InvalidModel { name: String, reason: String },

    #[error("invalid hardware spec: {0}")]
    InvalidHardware(String),

    #[error("nonpositive GEMM dimension: M={m}, K={k}, N={n}")]
    BadShape { m: u64, k: u64, n: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("cycle-accurate simulation refused: {macs} MACs exceeds the guard of {limit}")]
    SimulationTooLarge { macs: u64, limit: u64 },

    #[error("{role} is a W8A8 op and cannot be mapped onto the crossbars")]
    WrongDevice { role: String },

    #[error("cannot derive {0} from a zero total")]
    ZeroTotal(&'static str),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("unknown model '{0}' (not a zoo name or an existing file)")]
    UnknownModel(String),

    #[error("sweep failed at ({model}, l={context_len}, {mode}): {source}")]
    Sweep {
        model: String,
        context_len: u64,
        mode: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
