use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("specification has neither LSL nor USL")]
    MissingSpec,
    #[error("invalid specification limits: lsl {lsl} must be below usl {usl}")]
    InvalidSpec { lsl: f64, usl: f64 },
    #[error("sample contains a non-finite value at position {0}")]
    NonFiniteValue(usize),
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("degenerate sample: standard deviation is zero")]
    DegenerateSample,
    #[error("percentile spread collapsed (q99.865 == q50 or q50 == q0.135)")]
    QuantileCollapse,
    #[error("no candidate distribution family could be fitted")]
    NoFeasibleFamily,
    #[error("failed to fit {family} distribution: {reason}")]
    FitFailed { family: &'static str, reason: String },
    #[error("bootstrap resampling kept producing zero-variance resamples")]
    DegenerateBootstrap,
    #[error("too few bootstrap replications: got {got}, need at least {need}")]
    TooFewBoot { got: usize, need: usize },
    #[error("standard error must be positive, got {0}")]
    NonpositiveSE(f64),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("feature vector has {got} entries, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("loss became non-finite at epoch {epoch} (learning rate too high?)")]
    NonfiniteLoss { epoch: usize },
    #[error("model schema version {found:?} does not match {expected:?}")]
    SchemaVersionMismatch { expected: String, found: String },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("costs must be positive, got c_fa={c_fa}, c_fr={c_fr}")]
    NonpositiveCost { c_fa: f64, c_fr: f64 },
    #[error("no specification limits achieve target capability {target} for {family}")]
    InfeasibleSpec { family: &'static str, target: f64 },
    #[error("group {group:?} of size {size} does not fit a partition of capacity {capacity}")]
    GroupTooLarge {
        group: String,
        size: usize,
        capacity: usize,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingSpec => "MissingSpec",
            Error::InvalidSpec { .. } => "InvalidSpec",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::DegenerateSample => "DegenerateSample",
            Error::QuantileCollapse => "QuantileCollapse",
            Error::NoFeasibleFamily => "NoFeasibleFamily",
            Error::FitFailed { .. } => "FitFailed",
            Error::DegenerateBootstrap => "DegenerateBootstrap",
            Error::TooFewBoot { .. } => "TooFewBoot",
            Error::NonpositiveSE(_) => "NonpositiveSE",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::EmptyValidation => "EmptyValidation",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonfiniteLoss { .. } => "NonfiniteLoss",
            Error::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::NonpositiveCost { .. } => "NonpositiveCost",
            Error::InfeasibleSpec { .. } => "InfeasibleSpec",
            Error::GroupTooLarge { .. } => "GroupTooLarge",
            Error::EmptyInput => "EmptyInput",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
        }
    }
}

pub(crate) fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
