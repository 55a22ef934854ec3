use thiserror::Error;

/// Errors surfaced by the enhancement toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("bad stft config: {0}")]
    BadStftConfig(String),
    #[error("reconstruction unsupported: {0}")]
    ReconstructionUnsupported(String),
    #[error("segment too short for WPE: {frames} frames, need more than {required}")]
    SegmentTooShort { frames: usize, required: usize },
    #[error("bad wpe config: {0}")]
    BadWpeConfig(String),
    #[error("bad em config: {0}")]
    BadEmConfig(String),
    #[error("EM numerical failure at iteration {iteration}")]
    EmNumericalFailure { iteration: usize },
    #[error("empty core segment")]
    EmptyCoreSegment,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("annotation entry {index}: {reason}")]
    Annotation { index: usize, reason: String },
    #[error("invalid time stamp {0:?}")]
    TimeStamp(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("zero reference signal")]
    ZeroReference,
    #[error("no arrays to stack")]
    NoArrays,
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
