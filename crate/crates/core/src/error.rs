use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown pathology `{0}`")]
    UnknownPathology(String),
    #[error("mask `{name}` has {found} patterns, expected {expected}")]
    MaskCardinality {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown mask `{0}`")]
    UnknownMask(String),
    #[error("empty mask `{0}`")]
    EmptyMask(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training data has a single class")]
    SingleClass,
    #[error("need at least {needed} patients for {needed} folds, found {found}")]
    TooFewPatients { needed: usize, found: usize },
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("sample `{0}` has no valid patterns")]
    UnusableSample(String),
}
