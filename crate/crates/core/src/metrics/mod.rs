//! Queryability and distinctness metrics.

mod binary;
pub mod gaussian;
mod inter;
mod intra;
pub mod stats;

pub use binary::{aggregate_queryability, binary_metrics, BinaryMetrics, DegenerateFlags, MetricMeans, QueryabilitySummary};
pub use gaussian::{gaussian_summary, psd_project, wasserstein2, GaussianSummary, SummaryError};
pub use inter::{inter_map_distances, median_ratio, DistinctnessPair, InterMapOptions, InterMapResult, MedianRatio, SkippedLabel};
pub use intra::{avg_abs_deviation, intra_map_ratio, stratified_subsample, stratum_seed, stratum_size, IntraRecord, SampleSet};
pub use stats::{kruskal_wallis, median, quantile_sorted};
