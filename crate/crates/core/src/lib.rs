//! Evaluation toolkit for latent semantic maps: voxel grids whose cells hold
//! visual-language embeddings.
//!
//! Two properties are measured. *Queryability* scores binary query masks
//! against ground truth with precision, recall, F1 and IoU. *Distinctness*
//! compares per-label embedding populations, within a map through average
//! cosine deviation ratios and across maps through the Wasserstein-2 distance
//! between Gaussian approximations.

pub mod error;
pub mod ingest;
pub mod map;
pub mod metrics;
pub mod projection;
pub mod query;
pub mod report;

pub use error::{ArchiveError, Error, Result};
pub use ingest::{QueryLexicon, SyntheticSpec};
pub use map::{EmbeddingGrid, InstanceGrid, LabelId, LabelVocabulary, MapBundle, SemanticGrid, VoxelIndex};
pub use metrics::{BinaryMetrics, DistinctnessPair, GaussianSummary, IntraRecord, SampleSet};
pub use query::{BinaryMask, LabelField, PostProcessParams, ScoreField};
