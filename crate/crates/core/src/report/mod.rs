//! Evaluation protocols and their reports.

mod emit;
mod eval;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_map_archive, OTHER_KEY};
use crate::map::{MapBundle, NormStats};
use crate::metrics::{
    BinaryMetrics, DistinctnessPair, IntraRecord, MedianRatio, QueryabilitySummary, SkippedLabel,
};
use crate::query::PostProcessParams;

pub use emit::{emit_report, report_csv_tables, report_json, CsvTable, ReportFormat};
pub use eval::{
    predict_segmentation, predict_vlmaps, run_distinctness, run_queryability, run_resolution_sweep,
    truth_mask, SegmentationModel,
};
pub use plot::{box_stats, histogram_kde, scott_bandwidth, BoxStats, Histogram, KDE_POINTS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RESOLUTIONS: [f32; 4] = [0.02, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    /// Query versus negative prompts with morphological post-processing.
    #[default]
    VlmapsQuery,
    /// Argmax over the label vocabulary, then label equality.
    Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub map_paths: Vec<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub mode: QueryMode,
    pub params: PostProcessParams,
    /// Templates with a `{}` slot; empty disables prompt averaging.
    pub prompt_templates: Vec<String>,
    pub negatives: Vec<String>,
    pub subsample_ratio: f64,
    pub seed: u64,
    pub resolutions: Vec<f32>,
    pub normalize: bool,
    pub same_map_negatives: bool,
    pub min_samples: usize,
    pub diagonal_loading: f64,
    pub histogram_bins: usize,
    pub kde_bandwidth: Option<f64>,
    /// Thread count for the worker pool; never affects report contents.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            map_paths: Vec::new(),
            lexicon_path: None,
            mode: QueryMode::default(),
            params: PostProcessParams::default(),
            prompt_templates: Vec::new(),
            negatives: vec![OTHER_KEY.to_owned()],
            subsample_ratio: 0.1,
            seed: 0,
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            normalize: false,
            same_map_negatives: false,
            min_samples: crate::metrics::gaussian::DEFAULT_MIN_SAMPLES,
            diagonal_loading: crate::metrics::gaussian::DEFAULT_DIAGONAL_LOADING,
            histogram_bins: 30,
            kde_bandwidth: None,
            workers: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return Err(Error::Invalid(format!(
                "subsample ratio {} outside (0, 1]",
                self.subsample_ratio
            )));
        }
        if self.resolutions.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Invalid("resolutions must be positive".into()));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("resolutions must be strictly ascending".into()));
        }
        if self.negatives.is_empty() {
            return Err(Error::Invalid("at least one negative query is required".into()));
        }
        if self.prompt_templates.iter().any(|t| !t.contains(crate::query::TEMPLATE_SLOT)) {
            return Err(Error::Invalid("prompt templates need a {} slot".into()));
        }
        self.params.validate()
    }

    /// Runs `f` inside a pool of `workers` threads (or the global pool).
    pub(crate) fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.workers {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub map_id: String,
    pub query: String,
    pub label: u16,
    pub metrics: BinaryMetrics,
    /// Ground truth for the query is empty; excluded from macro averages.
    pub empty_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryabilitySection {
    pub rows: Vec<QueryRow>,
    pub summary: Option<QueryabilitySummary>,
    pub degenerate_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSeparation {
    pub label: String,
    pub kruskal_wallis: Option<f64>,
    pub matching: Option<BoxStats>,
    pub non_matching: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterSection {
    pub pairs: Vec<DistinctnessPair>,
    pub skipped: Vec<SkippedLabel>,
    pub median_ratio: Option<MedianRatio>,
    pub matching_histogram: Option<Histogram>,
    pub non_matching_histogram: Option<Histogram>,
    /// Sorted by decreasing Kruskal-Wallis separability.
    pub per_label: Vec<LabelSeparation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctnessSection {
    pub intra: Vec<IntraRecord>,
    pub intra_histogram: Option<Histogram>,
    pub inter: Option<InterSection>,
    pub inter_skipped_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFootprint {
    pub map_id: String,
    pub voxels: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolution: f32,
    pub footprint_bytes: u64,
    pub maps: Vec<MapFootprint>,
    pub queryability: QueryabilitySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNorms {
    pub map_id: String,
    #[serde(flatten)]
    pub stats: NormStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub kind: String,
    pub config: EvalConfig,
    pub norm_stats: Vec<MapNorms>,
    pub queryability: Option<QueryabilitySection>,
    pub distinctness: Option<DistinctnessSection>,
    pub sweep: Option<Vec<SweepRow>>,
}

impl Report {
    fn new(kind: &str, config: &EvalConfig) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            kind: kind.to_owned(),
            config: config.clone(),
            norm_stats: Vec::new(),
            queryability: None,
            distinctness: None,
            sweep: None,
        }
    }
}

/// Every `*.lsm` file in `dir`, in file-name order.
pub fn archive_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "lsm"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every archive in `dir`, sorted by map id.
pub fn load_map_dir(dir: impl AsRef<Path>) -> Result<Vec<MapBundle>> {
    let mut maps = archive_paths(dir)?
        .iter()
        .map(read_map_archive)
        .collect::<Result<Vec<_>>>()?;
    maps.sort_by(|a, b| a.map_id.cmp(&b.map_id));
    Ok(maps)
}

/// One template per non-empty line.
pub fn load_prompt_templates(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}
