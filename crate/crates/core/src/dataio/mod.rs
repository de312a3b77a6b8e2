//! File formats: `MYOVOL01` volumes, binary PGM/PPM exports and the dataset
//! manifest.

mod export;
mod manifest;
mod volume;

pub use export::{encode_overlay, encode_pgm, write_overlay, write_pgm, OverlayCounts, AGREEMENT_RGB, DISAGREEMENT_RGB};
pub use manifest::{load_samples, read_manifest, write_manifest, CaseRecord, SliceRecord};
pub use volume::{
    decode_volume, encode_volume, read_volume, write_volume, Dtype, VolumeHeader, DEFAULT_SPACING,
    VOLUME_MAGIC,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a volume file (bad magic)")]
    BadMagic,
    #[error("corrupt volume header: {0}")]
    CorruptHeader(String),
    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("payload mismatch: expected {expected} bytes, found {actual}")]
    PayloadMismatch { expected: u64, actual: u64 },
    #[error("value out of range: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

impl DataError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "io",
            DataError::BadMagic => "bad-magic",
            DataError::CorruptHeader(_) => "corrupt-header",
            DataError::UnknownDtype(_) => "unknown-dtype",
            DataError::DimMismatch(_) => "dim-mismatch",
            DataError::PayloadMismatch { .. } => "payload-mismatch",
            DataError::Domain(_) => "domain",
            DataError::Shape(_) => "shape",
            DataError::Manifest(_) => "manifest",
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
