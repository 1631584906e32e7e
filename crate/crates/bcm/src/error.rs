use thiserror::Error;

#[derive(Debug, Error)]
pub enum BcmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid needs at least {need} nodes, got {got}")]
    GridTooSmall { need: usize, got: usize },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("singular Volterra equation: diagonal coefficient {value:e} at node {index}")]
    SingularEquation { index: usize, value: f64 },

    #[error("operator is numerically singular (condition estimate {condition:e})")]
    NonInvertible { condition: f64 },

    #[error("operator is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("CFL condition violated: time step {ht:e} exceeds {limit:e}")]
    Cfl { ht: f64, limit: f64 },

    #[error("control must vanish at t = 0, got {0:e}")]
    Compatibility(f64),

    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("unknown medium '{0}'")]
    UnknownMedium(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("incompatible request: {0}")]
    Incompatible(String),

    #[error("kernel covers [0, {have}] but [0, {need}] is required")]
    KernelTooShort { need: f64, have: f64 },

    #[error("domain condition violated: {0}")]
    DomainCondition(String),

    #[error("inadmissible data: {0}")]
    Inadmissible(String),

    #[error("degenerate kernel normalizer {value:e} at xi = {xi}")]
    DegenerateKernel { xi: f64, value: f64 },

    #[error("singular control amplitude {0:e} is below 1e-6")]
    SmallAmplitude(f64),

    #[error("scattering setup: {0}")]
    ScatteringWindow(String),

    #[error("probe trace is not smooth enough, refine the grid: {0}")]
    RefineGrid(String),

    #[error("masked fraction {0:.3} exceeds the 0.1 limit")]
    TooManyMasked(f64),

    #[error("recovered x(xi) is not strictly increasing near xi = {0}")]
    NonMonotone(f64),
}

impl From<csv::Error> for BcmError {
    fn from(e: csv::Error) -> Self {
        BcmError::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BcmError>;
