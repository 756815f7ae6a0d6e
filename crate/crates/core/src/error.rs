use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("non-finite value in field `{field}`")]
    NonFiniteValue { field: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("illegal job transition: {from:?} + {event:?}")]
    IllegalTransition {
        from: crate::model::JobStatus,
        event: crate::model::JobEvent,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("record schema is empty")]
    EmptySchema,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown token id {0}")]
    UnknownId(usize),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported channel count {0}; only mono is accepted")]
    UnsupportedChannels(u16),
    #[error("unsupported sample rate {0} Hz; only 16000 Hz is accepted")]
    UnsupportedRate(u32),
    #[error("unsupported bit depth {0}; only 16-bit PCM is accepted")]
    UnsupportedBitDepth(u16),
    #[error("length {0} is not a power of two in 4..=4096")]
    NotPowerOfTwo(usize),
    #[error("clip has {0} samples; at least 400 are required")]
    ClipTooShort(usize),
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("image is {width}x{height}; at least 8x8 is required")]
    ImageTooSmall { width: usize, height: usize },
    #[error("caption list is empty")]
    EmptyCaptionList,
    #[error("backend did not answer within {0} ms")]
    BackendTimeout(u64),
    #[error("backend protocol error: {0}")]
    BackendProtocolError(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("all fusion weights are zero")]
    AllZeroWeights,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used in job envelopes and backend frames.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EmptySchema => "EmptySchema",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::UnknownId(_) => "UnknownId",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedChannels(_) => "UnsupportedChannels",
            Error::UnsupportedRate(_) => "UnsupportedRate",
            Error::UnsupportedBitDepth(_) => "UnsupportedBitDepth",
            Error::NotPowerOfTwo(_) => "NotPowerOfTwo",
            Error::ClipTooShort(_) => "ClipTooShort",
            Error::EmptySequence => "EmptySequence",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::EmptyCaptionList => "EmptyCaptionList",
            Error::BackendTimeout(_) => "BackendTimeout",
            Error::BackendProtocolError(_) => "BackendProtocolError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyDataset => "EmptyDataset",
            Error::AllZeroWeights => "AllZeroWeights",
            Error::InvalidImage(_) => "InvalidImage",
            Error::InvalidCheckpoint(_) => "InvalidCheckpoint",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}
