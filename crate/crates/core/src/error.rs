use thiserror::Error;

/// Last two iterates of a cutoff search that ran out of room.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceFailure {
    pub previous_cutoffs: Vec<usize>,
    pub last_cutoffs: Vec<usize>,
    /// `[time][state]` populations at the two iterates.
    pub previous_populations: Vec<Vec<f64>>,
    pub last_populations: Vec<Vec<f64>>,
    pub last_change: f64,
    pub last_leakage: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{what} index {index} out of range (have {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("Hilbert-space dimension {dim} exceeds the configured limit {limit}")]
    DimensionLimit { dim: usize, limit: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "cutoff search did not converge before the dimension limit (last cutoffs {:?}, change {:.3e}, leakage {:.3e})",
        .0.last_cutoffs, .0.last_change, .0.last_leakage
    )]
    ConvergenceFailure(Box<ConvergenceFailure>),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("no duration calibration for a {0}-ion chain")]
    UnsupportedChain(usize),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("term cannot be lowered to native pulses: {0}")]
    UnmappableTerm(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("line {line}: key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
