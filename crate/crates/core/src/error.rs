use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unknown style id `{0}`")]
    UnknownStyle(String),

    #[error("style corpus at {0} contains no decodable images")]
    EmptyCorpus(PathBuf),

    #[error("bank was built with engine {bank}, but the loaded engine is {engine}")]
    FingerprintMismatch { bank: String, engine: String },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    FormatVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("layer `{0}` not found in model")]
    MissingLayer(String),

    #[error("class {class} out of range for a {classes}-class model")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{0}")]
    Missing(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Invalid(_)
                | Error::UnknownStyle(_)
                | Error::ClassOutOfRange { .. }
                | Error::MissingLayer(_)
                | Error::FingerprintMismatch { .. }
                | Error::FormatVersion { .. }
        )
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn json_err(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
    let path = path.into();
    move |source| Error::Json { path, source }
}
