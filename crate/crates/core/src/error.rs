use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("clip of {actual} samples is shorter than the required {required}")]
    ClipTooShort { required: usize, actual: usize },

    #[error("class {class} has {count} items, need at least {required}")]
    TooFewPerClass { class: String, count: usize, required: usize },

    #[error("recording {recording_id}: fifth of {fifth_seconds} s is shorter than one {segment_seconds} s segment")]
    FifthTooShort {
        recording_id: String,
        fifth_seconds: f64,
        segment_seconds: f64,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
