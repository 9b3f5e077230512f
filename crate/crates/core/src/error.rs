use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid window: scale {scale} with center ({}, {}) leaves the image plane", center[0], center[1])]
    InvalidWindow { scale: f64, center: [f64; 2] },
    #[error("invalid ray bounds: near {near} must be >= 0 and below far {far}")]
    InvalidRay { near: f64, far: f64 },
    #[error("degenerate rotation pair (0, 0)")]
    DegenerateRotation,
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("camera sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("ingestion error for {}: {reason}", path.display())]
    Ingestion { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error for {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint does not match the configuration: {0}")]
    ConfigMismatch(String),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
