use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid tensor shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("{op}: expected rank {expected}, found rank {found}")]
    RankMismatch {
        op: &'static str,
        expected: String,
        found: usize,
    },

    #[error("{op}: shape mismatch on {axis}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        axis: String,
        expected: usize,
        found: usize,
    },

    #[error("{op}: non-positive output size on spatial axis {axis} (input {input}, kernel {kernel}, stride {stride}, padding {padding})")]
    NonPositiveOutput {
        op: &'static str,
        axis: usize,
        input: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },

    #[error("invalid layer {index} ({kind}): {reason}")]
    InvalidLayer {
        index: usize,
        kind: String,
        reason: String,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("batch normalization in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("batch normalization in infer mode needs running statistics")]
    MissingRunningStats,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("malformed model file at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
