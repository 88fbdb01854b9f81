use thiserror::Error;

/// Errors surfaced by the simulation laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("truncated run: total mass exceeded cap {cap}")]
    MassCap { cap: u64 },

    #[error("invalid good-configuration spec: {0}")]
    BadGoodSpec(String),

    #[error("invalid block scales: {0}")]
    BadBlockSpec(String),

    #[error("unstable scheme: dt = {dt} exceeds stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}
