use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: alloc::vec::Vec<usize>,
        rhs: alloc::vec::Vec<usize>,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(alloc::vec::Vec<usize>),
    #[error("variable belongs to a cleared tape")]
    StaleTape,
    #[error("action {action} is masked in the current state")]
    MaskedAction { action: usize },
    #[error("every action is masked")]
    AllMasked,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("teacher-sampled transition lacks the teacher log-probability")]
    MissingTeacherLogProb,
    #[error("non-finite loss `{component}` = {value}")]
    NonFiniteLoss { component: &'static str, value: f64 },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }
}
