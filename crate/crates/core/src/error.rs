use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis too large: {0}")]
    BasisTooLarge(String),

    #[error("quadrature with {nodes} nodes per dimension cannot project order {order}")]
    InsufficientQuadrature { nodes: usize, order: usize },

    #[error("degenerate experimental design: {0}")]
    DegenerateDesign(String),

    #[error("constant responses: variance of the experimental design outputs is zero")]
    ConstantResponse,

    #[error("no feasible response-surface order in {min}..={max} for {samples} samples")]
    NoFeasibleOrder { min: usize, max: usize, samples: usize },

    #[error("refinement threshold {new} is not below the previous threshold {previous}")]
    NonDecreasingThreshold { previous: f64, new: f64 },

    #[error("simulation diverged at t = {time}")]
    SimulationDiverged { time: f64 },

    #[error("closed loop is unstable (spectral abscissa {max_real})")]
    UnstableClosedLoop { max_real: f64 },

    #[error("frequency response is not finite at omega = {omega}")]
    FrequencySweep { omega: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
