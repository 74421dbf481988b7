use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}: no model checkpoint; run `opvi pretrain-lfa` first")]
    MissingCheckpoint(PathBuf),
    #[error("{path}: pixel {index} is {value}, expected 0 or 1")]
    NonBinaryData { path: PathBuf, index: usize, value: u8 },
    #[error("the KL objective needs a variational density; `{0}` has none")]
    IncompatiblePair(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] opvi_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 2 for anything wrong with the configuration or its inputs, 3 for a
    /// numerical abort, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use opvi_core::Error as C;
        match self {
            Error::Config(_)
            | Error::Format { .. }
            | Error::MissingCheckpoint(_)
            | Error::NonBinaryData { .. }
            | Error::IncompatiblePair(_) => 2,
            Error::Core(C::NonFiniteGradient { .. } | C::NonFiniteIntermediate { .. }) => 3,
            Error::Core(
                C::InvalidConfig(_)
                | C::IncompatibleObjective(_)
                | C::DensityUnavailable
                | C::ScoreUnavailable
                | C::DiscreteModelWithLsOperator
                | C::NotImplemented(_),
            ) => 2,
            _ => 1,
        }
    }
}
