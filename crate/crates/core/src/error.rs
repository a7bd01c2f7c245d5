use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("invalid mask value {value} at ({x}, {y})")]
    InvalidMaskValue { x: usize, y: usize, value: u16 },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("perplexity {perplexity} too large for {n} points")]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("degenerate duplicate points: {0}")]
    DuplicatePointsDegenerate(String),
    #[error("neighborhood graph is disconnected into {} components: {components:?}", components.len())]
    DisconnectedGraph { components: Vec<Vec<String>> },
    #[error("k = {k} out of range [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("invalid design box: {0}")]
    InvalidBox(String),
    #[error("insufficient pool: {available} unlabeled, budget {budget}")]
    InsufficientPool { available: usize, budget: usize },
    #[error("empty clustering")]
    EmptyClustering,
    #[error("missing uncertainty score for {0}")]
    MissingScore(String),
    #[error("training pixels contain a single class")]
    SingleClassTraining,
    #[error("image {width}x{height} smaller than patch size {size}")]
    ImageTooSmall { width: usize, height: usize, size: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("subset id {0} not contained in full set")]
    SubsetNotContained(String),
    #[error("image {width}x{height} smaller than the 128x128 patch")]
    ImageSmallerThanPatch { width: usize, height: usize },
    #[error("unknown instance {image_id}/{instance_id}")]
    UnknownInstance { image_id: String, instance_id: usize },
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
    #[error("image {0} has no process condition")]
    UnmappedImage(String),
    #[error("no conditions to aggregate")]
    EmptyAggregates,
    #[error("synthetic config infeasible: {0}")]
    ConfigInfeasible(String),
    #[error("test id {0} overlaps the labeled pool")]
    TestTrainOverlap(String),
    #[error("missing file for id {0}")]
    MissingFile(String),
    #[error("round order violation: expected round {expected}, got {got}")]
    RoundOrderViolation { expected: usize, got: usize },
    #[error("duplicate selection of {0}")]
    DuplicateSelection(String),
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("hash mismatch for {0}: dataset changed under the campaign")]
    HashMismatch(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable error code reported by the CLI on standard error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "E_FILE_NOT_FOUND",
            Error::UnsupportedFormat(_) => "E_UNSUPPORTED_FORMAT",
            Error::CorruptImage(_) => "E_CORRUPT_IMAGE",
            Error::InvalidMaskValue { .. } => "E_INVALID_MASK_VALUE",
            Error::InvalidRaster(_) => "E_INVALID_RASTER",
            Error::DimensionMismatch(_) => "E_DIMENSION_MISMATCH",
            Error::TooFewSamples { .. } => "E_TOO_FEW_SAMPLES",
            Error::DimensionError(_) => "E_DIMENSION",
            Error::PerplexityTooLarge { .. } => "E_PERPLEXITY_TOO_LARGE",
            Error::DuplicatePointsDegenerate(_) => "E_DUPLICATE_POINTS",
            Error::DisconnectedGraph { .. } => "E_DISCONNECTED_GRAPH",
            Error::KOutOfRange { .. } => "E_K_OUT_OF_RANGE",
            Error::DegenerateInput(_) => "E_DEGENERATE_INPUT",
            Error::UnknownCluster(_) => "E_UNKNOWN_CLUSTER",
            Error::InvalidBox(_) => "E_INVALID_BOX",
            Error::InsufficientPool { .. } => "E_INSUFFICIENT_POOL",
            Error::EmptyClustering => "E_EMPTY_CLUSTERING",
            Error::MissingScore(_) => "E_MISSING_SCORE",
            Error::SingleClassTraining => "E_SINGLE_CLASS_TRAINING",
            Error::ImageTooSmall { .. } => "E_IMAGE_TOO_SMALL",
            Error::EmptySample => "E_EMPTY_SAMPLE",
            Error::SubsetNotContained(_) => "E_SUBSET_NOT_CONTAINED",
            Error::ImageSmallerThanPatch { .. } => "E_IMAGE_SMALLER_THAN_PATCH",
            Error::UnknownInstance { .. } => "E_UNKNOWN_INSTANCE",
            Error::UnknownClass(_) => "E_UNKNOWN_CLASS",
            Error::UnmappedImage(_) => "E_UNMAPPED_IMAGE",
            Error::EmptyAggregates => "E_EMPTY_AGGREGATES",
            Error::ConfigInfeasible(_) => "E_CONFIG_INFEASIBLE",
            Error::TestTrainOverlap(_) => "E_TEST_TRAIN_OVERLAP",
            Error::MissingFile(_) => "E_MISSING_FILE",
            Error::RoundOrderViolation { .. } => "E_ROUND_ORDER",
            Error::DuplicateSelection(_) => "E_DUPLICATE_SELECTION",
            Error::SchemaVersionMismatch { .. } => "E_SCHEMA_VERSION",
            Error::HashMismatch(_) => "E_HASH_MISMATCH",
            Error::InvalidManifest(_) => "E_INVALID_MANIFEST",
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
