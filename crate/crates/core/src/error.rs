use std::fmt;

use thiserror::Error;

/// Which side of a user split came out empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Train => f.write_str("train"),
            Side::Test => f.write_str("test"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid score scale: {0}")]
    InvalidScale(String),
    #[error("invalid trait schema: {0}")]
    InvalidSchema(String),
    #[error("invalid score distribution: {0}")]
    InvalidDistribution(String),
    #[error("unknown category {label:?} for field {field:?}")]
    UnknownCategory { field: String, label: String },
    #[error("missing value for trait field {0:?}")]
    MissingTrait(String),
    #[error("unknown trait field {0:?}")]
    UnknownField(String),
    #[error("empty group")]
    EmptyGroup,
    #[error("trait vectors do not share a schema layout")]
    SchemaMismatch,
    #[error("score {0} is not on the scale")]
    OffScaleScore(f64),
    #[error("score distributions are on different scales ({left} vs {right} bins)")]
    ScaleMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate annotation for image {image:?} and rater {rater:?}")]
    DuplicatePair { image: String, rater: String },
    #[error("invalid annotation table: {0}")]
    InvalidTable(String),
    #[error("no samples survived filtering")]
    EmptyResult,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("too few images ({0}) to populate every split")]
    TooFewImages(usize),
    #[error("{0} user set is empty")]
    EmptySide(Side),
    #[error("{0} set is empty")]
    EmptySet(String),
    #[error("group size must be at least 2")]
    GroupSizeBelowTwo,
    #[error("image {0:?} has too few raters for the requested group size")]
    ImageTooSmall(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable identifier, used in CLI error JSON and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScale(_) => "InvalidScale",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::UnknownCategory { .. } => "UnknownCategory",
            Error::MissingTrait(_) => "MissingTrait",
            Error::UnknownField(_) => "UnknownField",
            Error::EmptyGroup => "EmptyGroup",
            Error::SchemaMismatch => "SchemaMismatch",
            Error::OffScaleScore(_) => "OffScaleScore",
            Error::ScaleMismatch { .. } => "ScaleMismatch",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::Parse { .. } => "ParseError",
            Error::DuplicatePair { .. } => "DuplicatePair",
            Error::InvalidTable(_) => "InvalidTable",
            Error::EmptyResult => "EmptyResult",
            Error::InvalidRatios(_) => "InvalidRatios",
            Error::TooFewImages(_) => "TooFewImages",
            Error::EmptySide(_) => "EmptySide",
            Error::EmptySet(_) => "EmptySet",
            Error::GroupSizeBelowTwo => "GroupSizeBelowTwo",
            Error::ImageTooSmall(_) => "ImageTooSmall",
            Error::Divergence { .. } => "Divergence",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
            Error::Toml(_) => "Toml",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
