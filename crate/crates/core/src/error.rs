use thiserror::Error;

use crate::estimation::SeedTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{model}: parameter {theta} is outside the open interval ({lower}, {upper})")]
    ParameterOutOfRange {
        model: &'static str,
        theta: f64,
        lower: f64,
        upper: f64,
    },

    #[error("{model}: support point {x} is below the support origin {origin}")]
    BelowSupport {
        model: &'static str,
        x: u64,
        origin: u64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation cap {cap} reached with captured mass {achieved_mass}")]
    Truncation { cap: u64, achieved_mass: f64 },

    /// A negative (or zero, in the logarithmic limit) exponent met an empty
    /// cell; the divergence is infinite there.
    #[error("divergence undefined at cell x = {cell}: {reason}")]
    UndefinedDivergence { cell: u64, reason: String },

    #[error("kernel undefined at delta = {delta} for exponent A = {a}")]
    KernelSingularity { delta: f64, a: f64 },

    #[error("no start point converged ({} tried)", trace.len())]
    NonConvergence { trace: Vec<SeedTrace> },

    #[error("degenerate information: J = {j} is not positive")]
    DegenerateInformation { j: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("all {replicates} replicates failed")]
    AllReplicatesFailed { replicates: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
