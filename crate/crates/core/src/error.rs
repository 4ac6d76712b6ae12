use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (|U'U - I|_F = {0:.3e})")]
    NotUnitary(f64),

    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },

    #[error("qubit {0} appears more than once in a target list")]
    RepeatedQubit(usize),

    /// A forced measurement outcome had (numerically) zero probability.
    #[error("forced outcome {outcome} has probability {probability:.3e}")]
    ZeroProbability { outcome: usize, probability: f64 },

    #[error("zero-norm contraction (boundary vectors annihilate the chain)")]
    ZeroNorm,

    #[error("symmetry relation violated: {0}")]
    SymmetryViolated(String),

    #[error("purification did not make progress after {0} iterations")]
    PurificationStalled(usize),

    #[error("incomplete Pauli measurement set: missing setting {0}")]
    IncompleteTomography(String),

    #[error("fit is not identifiable: {0}")]
    Unidentifiable(String),

    #[error("no shots survived post-selection")]
    EmptyShotSet,

    #[error("qubit role {0} is not present in the state")]
    MissingRole(String),

    #[error("singular confusion matrix for qubit {0}")]
    SingularConfusion(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
