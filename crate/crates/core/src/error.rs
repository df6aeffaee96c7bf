use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not a projection: {0}")]
    NotProjection(String),
    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is singular")]
    Singular,
    #[error("operators do not commute (commutator norm {0:.3e})")]
    NonCommuting(f64),
    #[error("operator is not normal (deviation {0:.3e})")]
    NotNormal(f64),
    #[error("generated algebra is trivial (multiples of the identity)")]
    TrivialAlgebra,
    #[error("projection lattice with {0} blocks is too large")]
    LatticeTooLarge(usize),
    #[error("operator does not lie in the algebra (residual {0:.3e})")]
    NotInAlgebra(f64),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("poset exceeds {0} contexts")]
    PosetTooLarge(usize),
    #[error("context {lower} is not included in context {upper}")]
    NotIncluded { lower: usize, upper: usize },
    #[error("projection is not in the lattice of the context")]
    NotInLattice,
    #[error("sub-object domains differ")]
    DomainMismatch,
    #[error("enumeration exceeds {0} sub-objects")]
    EnumerationTooLarge(usize),
    #[error("poset is not closed under the automorphism: {0}")]
    PosetNotClosed(String),
    #[error("measure table is inconsistent: {0}")]
    InconsistentTable(String),
    #[error("measure table is not additive: {0}")]
    NotAdditive(String),
    #[error("no positive state reproduces the table (negative eigenvalue {0:.3e})")]
    Infeasible(f64),
    #[error("state is not faithful (smallest eigenvalue {0:.3e})")]
    NotFaithful(f64),
    #[error("vector is not cyclic and separating (rank {rank} of {needed})")]
    NotCyclicSeparating { rank: usize, needed: usize },
    #[error("image is not a context of the target algebra: {0}")]
    InvalidImage(String),
    #[error("matching element is not unique: {0}")]
    AmbiguousMatch(String),
    #[error("no context contains the projection: {0}")]
    ContextMissing(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
