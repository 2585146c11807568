use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition did not converge")]
    NoConvergence,

    #[error("spectrum is degenerate (min eigenvalue gap {gap:e})")]
    Degenerate { gap: f64 },

    #[error("unsupported input for the paired tick form: {0}")]
    PairedFormUnsupported(String),

    #[error("improper tick distribution: {0}")]
    ImproperTick(String),

    #[error("no tick: absorbed fraction {absorbed:e} is below the floor {floor:e}")]
    NoTick { absorbed: f64, floor: f64 },

    #[error("non-real moment: imaginary residue {residue:e} for value {value:e}")]
    NonRealMoment { value: f64, residue: f64 },

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error("checkpoint does not match the requested run: {0}")]
    ResumeMismatch(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
