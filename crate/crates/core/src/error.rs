use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("shape error at node {node}: {msg}")]
    NodeShape { node: usize, msg: String },
    #[error("matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue})")]
    NotPsd { eigenvalue: f64 },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("value {value} outside the domain [0, 1]")]
    Domain { value: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("op `{0}` has no tape-expressible adjoint")]
    UnsupportedSecondOrder(&'static str),
    #[error("non-finite loss in term `{term}`")]
    NonFiniteLoss { term: &'static str },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("problem size {size} exceeds the limit {max}")]
    TooLarge { size: usize, max: usize },
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
