use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("kernel {kernel_h}x{kernel_w} does not fit input {input_h}x{input_w}")]
    KernelTooLarge {
        kernel_h: usize,
        kernel_w: usize,
        input_h: usize,
        input_w: usize,
    },
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("channel name mismatch at position {index}: expected {expected:?}, found {found:?}")]
    ChannelNameMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("invalid montage: {0}")]
    InvalidMontage(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch statistics need at least 2 values per feature, got {0}")]
    BatchTooSmall(usize),
    #[error("zero variance of paired differences")]
    ZeroVariance,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Whether the error came from a numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
