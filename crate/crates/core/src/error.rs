use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate state label '{0}'")]
    DuplicateLabel(String),
    #[error("unknown state label '{0}'")]
    UnknownState(String),
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("non-positive rate {rate} on edge {from} -> {to}")]
    NonPositiveRate { from: String, to: String, rate: f64 },
    #[error("self-loop on state '{0}'")]
    SelfLoop(String),
    #[error("a chain needs at least two states, got {0}")]
    TooFewStates(usize),
    #[error("chain is not irreducible: '{to}' is unreachable from '{from}'")]
    NotIrreducible { from: String, to: String },
    #[error("reflected chain is not irreducible: '{to}' is unreachable from '{from}'")]
    NotIrreducibleAfterReflection { from: String, to: String },
    #[error("measure is not stationary (residual {residual:e})")]
    NotStationary { residual: f64 },
    #[error("linear solver failure: {0}")]
    SolverFailure(String),
    #[error("{what}: {states} states exceeds the limit of {limit}")]
    TooLarge {
        what: String,
        states: usize,
        limit: usize,
    },
    #[error("bad sets: {0}")]
    BadSets(String),
    #[error("bad subset: {0}")]
    BadSubset(String),
    #[error("bad partition: {0}")]
    BadPartition(String),
    #[error("not admissible at '{vertex}': {reason}")]
    NotAdmissible { vertex: String, reason: String },
    #[error("chain is not reversible with respect to the given measure")]
    NotReversible,
    #[error("right-hand side has nonzero mean {mean:e}")]
    NotZeroMean { mean: f64 },
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("path starts in the separating set")]
    StartsInDelta,
    #[error("path visits the separating set at time {time}")]
    OutsideValleys { time: f64 },
    #[error("invalid path: {0}")]
    BadPath(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    /// Stable machine-readable kind, used in JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::UnknownState(_) => "UnknownState",
            Error::DuplicateEdge { .. } => "DuplicateEdge",
            Error::NonPositiveRate { .. } => "NonPositiveRate",
            Error::SelfLoop(_) => "SelfLoop",
            Error::TooFewStates(_) => "TooFewStates",
            Error::NotIrreducible { .. } => "NotIrreducible",
            Error::NotIrreducibleAfterReflection { .. } => "NotIrreducibleAfterReflection",
            Error::NotStationary { .. } => "NotStationary",
            Error::SolverFailure(_) => "SolverFailure",
            Error::TooLarge { .. } => "TooLarge",
            Error::BadSets(_) => "BadSets",
            Error::BadSubset(_) => "BadSubset",
            Error::BadPartition(_) => "BadPartition",
            Error::NotAdmissible { .. } => "NotAdmissible",
            Error::NotReversible => "NotReversible",
            Error::NotZeroMean { .. } => "NotZeroMean",
            Error::NonPositiveGamma(_) => "NonPositiveGamma",
            Error::StartsInDelta => "StartsInDelta",
            Error::OutsideValleys { .. } => "OutsideValleys",
            Error::BadPath(_) => "BadPath",
            Error::BadParams(_) => "BadParams",
            Error::Input(_) => "Input",
        }
    }

    /// Process exit code: 2 for bad input, 3 for resource guards, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TooLarge { .. } => 3,
            Error::SolverFailure(_) | Error::NotStationary { .. } => 4,
            _ => 2,
        }
    }
}
