use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("factor `{0}` has dimension zero")]
    ZeroDimension(String),
    #[error("data length {got} does not match expected {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("order {0:?} is not a permutation of the factor names")]
    NotAPermutation(Vec<String>),
    #[error("factor `{name}` has dimension {left} on one side and {right} on the other")]
    DimensionMismatch { name: String, left: usize, right: usize },
    #[error("operator is not Hermitian (anti-Hermitian part {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not {kind} (residual {residual:.3e})")]
    NotUnitary { kind: &'static str, residual: f64 },
    #[error("missing role {0} in process")]
    MissingRole(&'static str),
    #[error("role {0} appears more than once")]
    RepeatedRole(&'static str),
    #[error("invalid probability distribution ({0}, {1})")]
    BadDistribution(f64, f64),
    #[error("control basis is not orthonormal (residual {0:.3e})")]
    BadControlBasis(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("unitary between A_O and B_I must differ from the identity")]
    TrivialUnitary,
    #[error("generalized switch constraints violated (residuals {0:.3e}, {1:.3e})")]
    ConstraintsViolated(f64, f64),
    #[error("({p0}, {p1}) is not majorized by ({q0}, {q1})")]
    NotMajorized { p0: f64, p1: f64, q0: f64, q1: f64 },
    #[error("process does not match the plan source (fidelity {0})")]
    SpecMismatch(f64),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("state has support outside the weight-{0} subspace")]
    OutsideTypeClass(usize),
    #[error("set {0} is not bijective on any {1}-subset of copies")]
    NotBijective(usize, usize),
    #[error("no covering design found for N={n}, j={j} within {nodes} search nodes")]
    DesignSearchExhausted { n: usize, j: usize, nodes: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
