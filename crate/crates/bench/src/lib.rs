//! Shared fixtures for the benchmarks.

use lsm_core::ingest::{generate_synthetic_map, SyntheticSpec};
use lsm_core::metrics::{gaussian_summary, SampleSet};
use lsm_core::{GaussianSummary, MapBundle, QueryLexicon};

pub fn synthetic(classes: usize, per_class: usize, dim: usize, seed: u64) -> (MapBundle, QueryLexicon) {
    generate_synthetic_map(&SyntheticSpec::new(classes, per_class, dim, 0.05, seed)).expect("valid synthetic spec")
}

/// Gaussian summary of the first class of a synthetic map.
pub fn class_summary(dim: usize, samples: usize, seed: u64) -> GaussianSummary {
    let (map, _) = synthetic(2, samples, dim, seed);
    let sem = map.semantics.as_ref().expect("synthetic maps carry semantics");
    let members: Vec<&[f32]> = map
        .embeddings
        .iter()
        .filter(|(v, _)| sem.label(v) == Some(0))
        .map(|(_, e)| e)
        .collect();
    let set = SampleSet::from_vectors(&map.map_id, Some(0), &members).expect("consistent dims");
    gaussian_summary(&set, 2, 1e-10)
        .expect("finite samples")
        .expect("enough samples")
}
