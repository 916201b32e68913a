use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{what}: n = {n} exceeds the enumeration cap of {cap}")]
    CapExceeded { what: &'static str, n: usize, cap: usize },

    #[error("no heat load given for device {0}")]
    MissingLoad(u32),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("step size underflow at t = {t:.6e} s (h = {h:.3e}); the system may be stiff, try a looser tolerance")]
    StepUnderflow { t: f64, h: f64 },

    #[error("solver failure for {config}: {msg}")]
    Solver { config: String, msg: String },

    #[error("empty ranking: no configuration was solved successfully")]
    EmptyRanking,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
