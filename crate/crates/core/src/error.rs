use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has non-finite coordinates ({x}, {y}, {w}, {h})")]
    NonFinite { x: f64, y: f64, w: f64, h: f64 },
    #[error("box must have positive extent, got w={w} h={h}")]
    Degenerate { w: f64, h: f64 },
    #[error("box origin must be non-negative, got ({x}, {y})")]
    NegativeOrigin { x: f64, y: f64 },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("invalid scale range [{lower}, {upper}]")]
    InvalidRange { lower: f64, upper: f64 },
    #[error("pyramid needs at least one scaling factor")]
    EmptyPyramid,
    #[error("scaling factor {0} must be finite and positive")]
    InvalidOmega(f64),
    #[error("scaling factor {0} appears twice")]
    DuplicateOmega(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("resolution index {index} not in range table of {len} entries")]
    UnknownResolution { index: usize, len: usize },
    #[error("range table entry {index}: {reason}")]
    InvalidTableEntry { index: usize, reason: String },
    #[error("histograms use different bin edges")]
    MismatchedBins,
    #[error("invalid histogram binning: {0}")]
    InvalidBinning(String),
    #[error("instance {instance} references unknown image {image}")]
    MissingImage { instance: u64, image: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid soft-nms configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("detection on image {image_id} has category {category_id}, unknown to the ground truth vocabulary")]
    UnknownCategory { image_id: u64, category_id: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("oracle cannot evaluate range {range}: {reason}")]
    Oracle { range: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PyramidError {
    #[error("invalid level assignment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid detector profile: {0}")]
    InvalidProfile(String),
    #[error("invalid synthetic dataset config: {0}")]
    InvalidDataset(String),
}

/// Failures while reading COCO-format annotation or result files.
#[derive(Debug, Error)]
pub enum CocoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation {id}: {reason}")]
    Annotation { id: u64, reason: String },
    #[error("image {id}: {reason}")]
    Image { id: u64, reason: String },
    #[error("category {id}: {reason}")]
    Category { id: u64, reason: String },
    #[error("detection #{index}: {reason}")]
    Detection { index: usize, reason: String },
}
