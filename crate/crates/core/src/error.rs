use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value produced by `{op}` at node {node}")]
    NonFiniteIntermediate { node: usize, op: &'static str },
    #[error("gradient root must be scalar-valued")]
    NonScalarRoot,
    #[error("empty data batch")]
    EmptyBatch,
    #[error("model has no hierarchical decomposition")]
    NotHierarchical,
    #[error("bad batch indices: {0}")]
    BadIndices(String),
    #[error("the Langevin-Stein operator requires a continuous model")]
    DiscreteModelWithLsOperator,
    #[error("variational family has no tractable density")]
    DensityUnavailable,
    #[error("discrete test function must satisfy f(0) = 0")]
    FZeroNonzero,
    #[error("zero probability at support point {0}")]
    ZeroProbabilityPoint(usize),
    #[error("{0} is not implemented")]
    NotImplemented(&'static str),
    #[error("score function is unavailable for this family")]
    ScoreUnavailable,
    #[error("operator is not differentiable in z")]
    OperatorNotDifferentiable,
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: u64 },
    #[error("incompatible objective: {0}")]
    IncompatibleObjective(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
