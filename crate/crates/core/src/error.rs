use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },

    #[error("non-finite Lab input: ({0}, {1}, {2})")]
    NonFinite(f64, f64, f64),

    #[error("weighting factors must be positive and finite, got kL={0} kC={1} kH={2}")]
    InvalidWeights(f64, f64, f64),

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to encode image {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("model has no populated bins")]
    EmptyModel,

    #[error("gray mode mismatch: model trained with {model}, query uses {query}")]
    GrayModeMismatch {
        model: &'static str,
        query: &'static str,
    },

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("invalid bin configuration: {0}")]
    BinConfig(String),

    #[error("mask excludes every pixel; mean is undefined")]
    FullyMasked,

    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: u32,
        height: u32,
        window: u32,
    },

    #[error("scores contain only one class; need at least one anomalous and one normal")]
    SingleClass,

    #[error("K={k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("non-finite score for {0}")]
    NonFiniteScore(String),

    #[error("invalid colormap: {0}")]
    Colormap(String),

    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),

    #[error("no healthy images under {0}")]
    NoHealthyImages(PathBuf),

    #[error("requested {requested} diseased test images but only {available} exist")]
    NotEnoughDiseased { requested: usize, available: usize },

    #[error("healthy train fraction must lie in (0,1), got {0}")]
    InvalidFraction(f64),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("diseased image {0} listed in the training split")]
    DiseasedInTraining(String),

    #[error("invalid score file: {0}")]
    ScoreFile(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
