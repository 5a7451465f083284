use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::qubits::QubitSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("`{name}` has {got} entries, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("at least {min} qubits required, got {n}")]
    TooFewQubits { n: usize, min: usize },
    #[error("qubit {index} is outside 0..{n}")]
    QubitOutOfRange { index: usize, n: usize },
    #[error("non-finite coefficient {0}")]
    NonFinite(f64),
    #[error("operator on {size} qubits exceeds the dense limit of {limit}")]
    SupportTooLarge { size: usize, limit: usize },
    #[error("{n} qubits exceeds the exact-diagonalization limit of {limit}")]
    SystemTooLarge { n: usize, limit: usize },
    #[error("term matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("no candidate constraint fits in a budget of {budget} parameters")]
    EmptyPool { budget: u64 },
    #[error("subset {0} is not in the candidate pool")]
    NotInPool(QubitSet),
    #[error("adding {subset} raises the cost to {cost}, above the budget of {budget}")]
    OverBudget { subset: QubitSet, cost: u64, budget: u64 },
    #[error("{0} is not an active constraint")]
    NotActive(QubitSet),
    #[error("{0} is already active or covered by an active constraint")]
    AlreadyActive(QubitSet),
    #[error("candidate index {index} outside a pool of {len}")]
    BadCandidate { index: usize, len: usize },
    #[error("bit vector has {got} entries, pool has {expected}")]
    EncodingLength { expected: usize, got: usize },
    #[error("{r} is not contained in {s}")]
    NotSubset { r: QubitSet, s: QubitSet },
    #[error("cannot parse constraint set: {0}")]
    Parse(String),

    #[error("constraint rows {rows:?} are linearly dependent on earlier rows")]
    RankDeficient { rows: Vec<usize> },
    #[error("constraint rows {0} and {1} are identical with different right-hand sides")]
    InconsistentRows(usize, usize),
    #[error("malformed SDP: {0}")]
    MalformedProblem(String),
    #[error("Schur complement factorization failed at iteration {0}")]
    SchurBreakdown(usize),

    #[error("network dimensions differ: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite training loss {loss} at update {update}")]
    NonFiniteLoss { loss: f64, update: usize },
    #[error("no valid action from the current state")]
    NoValidAction,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
