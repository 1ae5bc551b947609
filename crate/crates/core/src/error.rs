use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural problems with a cascade policy, reported for the first
/// offending stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy has no stages")]
    NoStages,
    #[error("stage {stage:?}: closed-book stages are only allowed at position 0")]
    MisplacedClosedBook { stage: String },
    #[error("stage {stage:?}: the first stage must be closed-book")]
    FirstStageNotClosedBook { stage: String },
    #[error("stage {stage:?}: closed-book stage must use 0 passages, got {passages}")]
    ClosedBookPassages { stage: String, passages: u32 },
    #[error("stage {stage:?}: open-book passages must strictly increase ({previous} -> {passages})")]
    NonIncreasingPassages {
        stage: String,
        previous: u32,
        passages: u32,
    },
    #[error("stage {stage:?}: the final stage answers unconditionally and must not carry a threshold")]
    ThresholdOnFinalStage { stage: String },
    #[error("stage {stage:?}: non-final stage is missing its escalation threshold")]
    MissingThreshold { stage: String },
    #[error("stage {stage:?}: threshold {value} is outside [0, 1]")]
    ThresholdOutOfRange { stage: String, value: f64 },
    #[error("duplicate stage name {stage:?}")]
    DuplicateStageName { stage: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid policy: {0}")]
    Policy(#[from] PolicyError),

    #[error("question {qid:?} needs a record for stage {stage:?} but none was logged")]
    MissingStageRecord { qid: String, stage: String },

    #[error("duplicate record for question {qid:?} at stage {stage:?}")]
    DuplicateRecord { qid: String, stage: String },

    #[error("threshold grid has {combinations} combinations (limit {limit})")]
    GridTooLarge { combinations: u128, limit: u128 },

    #[error("target accuracy {target} is above the curve maximum {max}")]
    TargetUnreachable { target: f64, max: f64 },

    #[error("backend for stage {stage:?} is unreachable: {message}")]
    BackendUnreachable { stage: String, message: String },

    #[error("backend for stage {stage:?} returned a malformed response: {message}")]
    MalformedBackendResponse { stage: String, message: String },

    #[error("{}:{line}: malformed line: {message}", file.display())]
    MalformedLine {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: schema violation in field {field:?}: {message}", file.display())]
    SchemaViolation {
        file: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{}:{line}: duplicate record for question {qid:?} at stage {stage:?}", file.display())]
    DuplicateRecordAt {
        file: PathBuf,
        line: usize,
        qid: String,
        stage: String,
    },

    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
