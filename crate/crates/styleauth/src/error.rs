use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV header: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedWav(String),

    #[error("manifest parse error at line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },

    #[error("duplicate manifest key {0}")]
    DuplicateUtterance(String),

    #[error("incomplete token group {group}: expected 9 tokens, found {found}")]
    IncompleteGroup { group: String, found: usize },

    #[error("utterance too short: {samples} samples, need at least {needed}")]
    UtteranceTooShort { samples: usize, needed: usize },

    #[error("degenerate frame: zero or non-finite autocorrelation energy")]
    DegenerateFrame,

    #[error("no usable frames in clip ({skipped} degenerate frames skipped)")]
    NoUsableFrames { skipped: usize },

    #[error("dimension mismatch: model expects {expected}, observation has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no admissible state path for observation sequence")]
    NoAdmissiblePath,

    #[error("sequence of length {len} shorter than the {n_states} states required for left-to-right reachability")]
    SequenceTooShort { len: usize, n_states: usize },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("numerical failure in Baum-Welch at iteration {iteration}: {msg}")]
    TrainingDiverged { iteration: usize, msg: String },

    #[error("suprasegmental state {state} collected no prosodic vectors; model untrainable")]
    EmptySupraState { state: usize },

    #[error("empty prosodic segment at index {0}")]
    EmptySegment(usize),

    #[error("unknown claim identity {0}")]
    UnknownClaim(String),

    #[error("missing imposter model {0} in registry")]
    MissingImposter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model serialization: {0}")]
    ModelFormat(String),
}
