//! Cross-map distances between per-label embedding populations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::gaussian::{gaussian_summary, wasserstein2, GaussianSummary, SummaryError};
use crate::metrics::stats::median;
use crate::metrics::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterMapOptions {
    pub min_samples: usize,
    pub diagonal_loading: f64,
    /// Also pair different labels within the same map as non-matching.
    pub same_map_negatives: bool,
}

impl Default for InterMapOptions {
    fn default() -> Self {
        Self {
            min_samples: super::gaussian::DEFAULT_MIN_SAMPLES,
            diagonal_loading: super::gaussian::DEFAULT_DIAGONAL_LOADING,
            same_map_negatives: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctnessPair {
    pub map_a: String,
    pub label_a: String,
    pub map_b: String,
    pub label_b: String,
    pub distance: f64,
    pub matching: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLabel {
    pub map_id: String,
    pub label: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterMapResult {
    pub pairs: Vec<DistinctnessPair>,
    pub skipped: Vec<SkippedLabel>,
}

fn key(set: &SampleSet) -> String {
    set.label_name
        .clone()
        .or_else(|| set.label.map(|l| l.to_string()))
        .unwrap_or_default()
}

/// Wasserstein-2 distance for every qualifying pair of `(map, label)` sample
/// sets. `maps` holds the per-label sets of each map. Labels are matched across
/// maps by name. Pairs come out sorted by `(map_a, label_a, map_b, label_b)`.
pub fn inter_map_distances(maps: &[Vec<SampleSet>], options: &InterMapOptions) -> Result<InterMapResult> {
    if maps.len() < 2 {
        return Err(Error::Invalid(format!(
            "inter-map distinctness needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let sets: Vec<&SampleSet> = maps.iter().flatten().collect();
    let summaries: Vec<Result<std::result::Result<GaussianSummary, SummaryError>>> = sets
        .par_iter()
        .map(|s| gaussian_summary(s, options.min_samples, options.diagonal_loading))
        .collect();

    let mut kept: Vec<(String, String, GaussianSummary)> = Vec::new();
    let mut skipped = Vec::new();
    for (set, summary) in sets.iter().zip(summaries) {
        match summary? {
            Ok(g) => kept.push((set.map_id.clone(), key(set), g)),
            Err(SummaryError::TooFewSamples(n)) => skipped.push(SkippedLabel {
                map_id: set.map_id.clone(),
                label: key(set),
                samples: n,
            }),
        }
    }
    kept.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    skipped.sort_by(|a, b| (&a.map_id, &a.label).cmp(&(&b.map_id, &b.label)));

    let mut index_pairs = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let same_map = kept[i].0 == kept[j].0;
            if !same_map || (options.same_map_negatives && kept[i].1 != kept[j].1) {
                index_pairs.push((i, j));
            }
        }
    }
    let pairs = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&kept[i], &kept[j]);
            Ok(DistinctnessPair {
                map_a: a.0.clone(),
                label_a: a.1.clone(),
                map_b: b.0.clone(),
                label_b: b.1.clone(),
                distance: wasserstein2(&a.2, &b.2)?,
                matching: a.1 == b.1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InterMapResult { pairs, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRatio {
    pub matching_median: f64,
    pub non_matching_median: f64,
    /// `None` when the matching median is zero; `infinite` is then set.
    pub ratio: Option<f64>,
    pub infinite: bool,
}

/// Median non-matching distance over median matching distance.
pub fn median_ratio(pairs: &[DistinctnessPair]) -> Result<MedianRatio> {
    let (matching, non_matching): (Vec<_>, Vec<_>) = pairs.iter().partition(|p| p.matching);
    let m: Vec<f64> = matching.iter().map(|p| p.distance).collect();
    let nm: Vec<f64> = non_matching.iter().map(|p| p.distance).collect();
    let mm = median(&m).ok_or(Error::Empty("matching pairs"))?;
    let nmm = median(&nm).ok_or(Error::Empty("non-matching pairs"))?;
    let (ratio, infinite) = if mm == 0.0 {
        (None, true)
    } else {
        (Some(nmm / mm), false)
    };
    Ok(MedianRatio {
        matching_median: mm,
        non_matching_median: nmm,
        ratio,
        infinite,
    })
}
