use std::path::PathBuf;

use thiserror::Error;

use crate::map::VoxelIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an LSM archive.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("bad magic bytes {found:?}, expected \"LSMM\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u16),
    #[error("archive truncated while reading {what}: needed {needed} bytes, {available} left")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("non-finite embedding component at voxel {voxel}")]
    NonFiniteEmbedding { voxel: VoxelIndex },
    #[error("label id {id} at voxel {voxel} is out of range for a vocabulary of {labels} labels")]
    LabelOutOfRange {
        voxel: VoxelIndex,
        id: u16,
        labels: usize,
    },
    #[error("malformed archive: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("zero-norm embedding{}", voxel.map(|v| format!(" at voxel {v}")).unwrap_or_default())]
    ZeroNorm { voxel: Option<VoxelIndex> },
    #[error("cell size {to} is not an integer multiple of {from}")]
    NonIntegerRatio { from: f32, to: f32 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unresolved query key {0:?}")]
    UnresolvedKey(String),
    #[error("universe mismatch between masks")]
    UniverseMismatch,
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("non-finite result: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::NonFinite(_))
    }
}
