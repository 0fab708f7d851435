use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::QueryLexicon;
use crate::map::{footprint_bytes, l2_normalize, norm_stats, regrid, LabelId, MapBundle};
use crate::metrics::{
    aggregate_queryability, binary_metrics, intra_map_ratio, inter_map_distances, kruskal_wallis,
    median_ratio, stratified_subsample, InterMapOptions, SampleSet,
};
use crate::query::{
    mask_from_labels, resolve_query, segmentation_assign, vlmaps_binary_query_multi, BinaryMask,
    LabelField, PostProcessParams,
};
use crate::report::plot::{box_stats, histogram_kde};
use crate::report::{
    DistinctnessSection, EvalConfig, InterSection, LabelSeparation, MapFootprint, MapNorms,
    QueryMode, QueryRow, QueryabilitySection, Report, SweepRow,
};

/// Voxels whose ground-truth label is `label`.
pub fn truth_mask(map: &MapBundle, label: LabelId) -> Result<BinaryMask> {
    let sem = map
        .semantics
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("map {} has no semantics", map.map_id)))?;
    Ok(BinaryMask::from_fn(Arc::clone(map.embeddings.voxels()), |_, v| {
        sem.label(&v) == Some(label)
    }))
}

fn check_dim(map: &MapBundle, lexicon: &QueryLexicon) -> Result<()> {
    if map.embeddings.dim() != lexicon.dim {
        return Err(Error::DimMismatch {
            expected: map.embeddings.dim(),
            found: lexicon.dim,
        });
    }
    Ok(())
}

/// Segmentation-mode label assignment of one map against its own vocabulary.
pub struct SegmentationModel {
    pub field: LabelField,
}

impl SegmentationModel {
    pub fn new(map: &MapBundle, lexicon: &QueryLexicon, templates: &[String]) -> Result<Self> {
        check_dim(map, lexicon)?;
        let vocab = map
            .vocabulary()
            .ok_or_else(|| Error::Invalid(format!("map {} has no semantics", map.map_id)))?;
        let label_embeddings = vocab
            .labels()
            .iter()
            .map(|l| resolve_query(lexicon, l, templates))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            field: segmentation_assign(&map.embeddings, &label_embeddings)?,
        })
    }
}

pub fn predict_segmentation(model: &SegmentationModel, label: LabelId) -> BinaryMask {
    mask_from_labels(&model.field, label)
}

pub fn predict_vlmaps(
    map: &MapBundle,
    query: &[f32],
    negatives: &[Vec<f32>],
    params: &PostProcessParams,
) -> Result<BinaryMask> {
    vlmaps_binary_query_multi(&map.embeddings, query, negatives, params)
}

fn resolve_negatives(lexicon: &QueryLexicon, config: &EvalConfig) -> Result<Vec<Vec<f32>>> {
    config
        .negatives
        .iter()
        .map(|n| resolve_query(lexicon, n, &config.prompt_templates))
        .collect()
}

fn map_rows(map: &MapBundle, lexicon: &QueryLexicon, config: &EvalConfig) -> Result<Vec<QueryRow>> {
    check_dim(map, lexicon)?;
    let vocab = map
        .vocabulary()
        .ok_or_else(|| Error::Invalid(format!("map {} has no semantics", map.map_id)))?;
    // Resolve every query up front so a missing key fails before any work.
    let queries = vocab
        .labels()
        .iter()
        .map(|l| resolve_query(lexicon, l, &config.prompt_templates))
        .collect::<Result<Vec<_>>>()?;

    let predict: Box<dyn Fn(LabelId) -> Result<BinaryMask> + Sync> = match config.mode {
        QueryMode::Segmentation => {
            let model = SegmentationModel::new(map, lexicon, &config.prompt_templates)?;
            Box::new(move |label| Ok(predict_segmentation(&model, label)))
        }
        QueryMode::VlmapsQuery => {
            let negatives = resolve_negatives(lexicon, config)?;
            let queries = &queries;
            Box::new(move |label| {
                predict_vlmaps(map, &queries[usize::from(label)], &negatives, &config.params)
            })
        }
    };

    vocab
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|label| {
            let pred = predict(label)?;
            let truth = truth_mask(map, label)?;
            let metrics = binary_metrics(&pred, &truth)?;
            Ok(QueryRow {
                map_id: map.map_id.clone(),
                query: vocab.name(label).unwrap_or_default().to_owned(),
                label,
                empty_truth: metrics.truth_is_empty(),
                metrics,
            })
        })
        .collect()
}

fn queryability_section(
    maps: &[MapBundle],
    lexicon: &QueryLexicon,
    config: &EvalConfig,
) -> Result<QueryabilitySection> {
    let per_map = maps
        .par_iter()
        .map(|m| map_rows(m, lexicon, config))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<QueryRow> = per_map.into_iter().flatten().collect();
    rows.sort_by(|a, b| (&a.map_id, a.label).cmp(&(&b.map_id, b.label)));
    let summary = aggregate_queryability(rows.iter().map(|r| &r.metrics)).ok();
    let degenerate_rows = rows.iter().filter(|r| r.metrics.degenerate.any()).count();
    Ok(QueryabilitySection {
        rows,
        summary,
        degenerate_rows,
    })
}

fn norms(maps: &[MapBundle]) -> Result<Vec<MapNorms>> {
    maps.iter()
        .filter(|m| !m.embeddings.is_empty())
        .map(|m| {
            Ok(MapNorms {
                map_id: m.map_id.clone(),
                stats: norm_stats(&m.embeddings)?,
            })
        })
        .collect()
}

/// Queries every map with each label of its vocabulary and scores the masks
/// against the ground-truth semantics.
pub fn run_queryability(maps: &[MapBundle], lexicon: &QueryLexicon, config: &EvalConfig) -> Result<Report> {
    config.validate()?;
    let mut report = Report::new("queryability", config);
    report.norm_stats = norms(maps)?;
    report.queryability = Some(config.in_pool(|| queryability_section(maps, lexicon, config))??);
    Ok(report)
}

fn distinctness_section(maps: &[MapBundle], config: &EvalConfig) -> Result<DistinctnessSection> {
    let subsampled = maps
        .par_iter()
        .map(|m| {
            let sem = m
                .semantics
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("map {} has no semantics", m.map_id)))?;
            let normalized;
            let grid = if config.normalize {
                normalized = l2_normalize(&m.embeddings)?;
                &normalized
            } else {
                &m.embeddings
            };
            stratified_subsample(&m.map_id, sem, grid, config.subsample_ratio, config.seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut intra = Vec::new();
    for (labels, all) in &subsampled {
        for set in labels {
            intra.push(intra_map_ratio(set, all)?);
        }
    }
    let ratios: Vec<f64> = intra.iter().map(|r| r.ratio).collect();
    let intra_histogram = if ratios.is_empty() {
        None
    } else {
        Some(histogram_kde(&ratios, config.histogram_bins, config.kde_bandwidth)?)
    };

    let (inter, inter_skipped_reason) = if maps.len() < 2 {
        (None, Some(format!("inter-map distinctness needs at least 2 maps, got {}", maps.len())))
    } else {
        let per_map: Vec<Vec<SampleSet>> = subsampled.into_iter().map(|(l, _)| l).collect();
        (Some(inter_section(&per_map, config)?), None)
    };
    Ok(DistinctnessSection {
        intra,
        intra_histogram,
        inter,
        inter_skipped_reason,
    })
}

fn inter_section(per_map: &[Vec<SampleSet>], config: &EvalConfig) -> Result<InterSection> {
    let options = InterMapOptions {
        min_samples: config.min_samples,
        diagonal_loading: config.diagonal_loading,
        same_map_negatives: config.same_map_negatives,
    };
    let result = inter_map_distances(per_map, &options)?;
    let matching: Vec<f64> = result.pairs.iter().filter(|p| p.matching).map(|p| p.distance).collect();
    let non_matching: Vec<f64> = result.pairs.iter().filter(|p| !p.matching).map(|p| p.distance).collect();
    let hist = |v: &[f64]| -> Result<_> {
        if v.is_empty() {
            Ok(None)
        } else {
            histogram_kde(v, config.histogram_bins, config.kde_bandwidth).map(Some)
        }
    };

    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &result.pairs {
        if p.matching {
            groups.entry(&p.label_a).or_default().0.push(p.distance);
        } else {
            groups.entry(&p.label_a).or_default().1.push(p.distance);
            groups.entry(&p.label_b).or_default().1.push(p.distance);
        }
    }
    let mut per_label = groups
        .into_iter()
        .map(|(label, (m, nm))| {
            let h = if m.is_empty() || nm.is_empty() {
                None
            } else {
                Some(kruskal_wallis(&m, &nm)?)
            };
            Ok(LabelSeparation {
                label: label.to_owned(),
                kruskal_wallis: h,
                matching: box_stats(&m).ok(),
                non_matching: box_stats(&nm).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Most separable first; labels without a statistic last, then by name.
    per_label.sort_by(|a, b| {
        let ka = a.kruskal_wallis.unwrap_or(f64::NEG_INFINITY);
        let kb = b.kruskal_wallis.unwrap_or(f64::NEG_INFINITY);
        kb.total_cmp(&ka).then_with(|| a.label.cmp(&b.label))
    });

    Ok(InterSection {
        median_ratio: median_ratio(&result.pairs).ok(),
        matching_histogram: hist(&matching)?,
        non_matching_histogram: hist(&non_matching)?,
        per_label,
        pairs: result.pairs,
        skipped: result.skipped,
    })
}

/// Intra-map ratios for every map, and cross-map Wasserstein distances when
/// two or more maps are given.
pub fn run_distinctness(maps: &[MapBundle], config: &EvalConfig) -> Result<Report> {
    config.validate()?;
    let mut report = Report::new("distinctness", config);
    report.norm_stats = norms(maps)?;
    report.distinctness = Some(config.in_pool(|| distinctness_section(maps, config))??);
    Ok(report)
}

/// Regrids every map to each resolution of the ladder and records footprint
/// and queryability per resolution.
pub fn run_resolution_sweep(maps: &[MapBundle], lexicon: &QueryLexicon, config: &EvalConfig) -> Result<Report> {
    config.validate()?;
    let mut report = Report::new("sweep", config);
    report.norm_stats = norms(maps)?;
    let rows = config.in_pool(|| {
        config
            .resolutions
            .iter()
            .map(|&r| {
                let coarse = maps
                    .par_iter()
                    .map(|m| regrid(m, r))
                    .collect::<Result<Vec<_>>>()?;
                let footprints: Vec<MapFootprint> = coarse
                    .iter()
                    .map(|m| MapFootprint {
                        map_id: m.map_id.clone(),
                        voxels: m.voxel_count(),
                        bytes: footprint_bytes(m),
                    })
                    .collect();
                Ok(SweepRow {
                    resolution: r,
                    footprint_bytes: footprints.iter().map(|f| f.bytes).sum(),
                    maps: footprints,
                    queryability: queryability_section(&coarse, lexicon, config)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    report.sweep = Some(rows);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic_map, SyntheticSpec};

    fn synth(seed: u64, noise: f64) -> (MapBundle, QueryLexicon) {
        generate_synthetic_map(&SyntheticSpec::new(3, 60, 8, noise, seed)).unwrap()
    }

    #[test]
    fn exact_means_segment_perfectly() {
        let (map, lex) = synth(1, 0.0);
        let config = EvalConfig {
            mode: QueryMode::Segmentation,
            ..Default::default()
        };
        let q = run_queryability(&[map], &lex, &config).unwrap().queryability.unwrap();
        assert_eq!(q.rows.len(), 3);
        assert!(q.rows.iter().all(|r| r.metrics.f1 == 1.0));
    }

    #[test]
    fn rows_per_map_and_query() {
        let (a, lex) = synth(1, 0.05);
        let (b, _) = synth(2, 0.05);
        let q = run_queryability(&[a, b], &lex, &EvalConfig::default()).unwrap().queryability.unwrap();
        assert_eq!(q.rows.len(), 6);
    }

    #[test]
    fn missing_query_has_empty_truth() {
        let (map, mut lex) = synth(1, 0.0);
        // Relabel every class-2 voxel as class 0 so class 2 has no ground truth.
        let mut map = map;
        let sem = map.semantics.as_mut().unwrap();
        for l in sem.cells.values_mut() {
            if *l == 2 {
                *l = 0;
            }
        }
        lex.entries.insert("other".into(), {
            let mut v = vec![0.0; 8];
            v[7] = 1.0;
            v
        });
        let q = run_queryability(&[map], &lex, &EvalConfig::default()).unwrap().queryability.unwrap();
        let row = q.rows.iter().find(|r| r.label == 2).unwrap();
        assert!(row.empty_truth && row.metrics.degenerate.recall);
        assert_eq!(q.summary.unwrap().macro_records, 2);
    }

    #[test]
    fn unresolvable_label() {
        let (map, mut lex) = synth(1, 0.0);
        lex.entries.remove("class_1");
        assert!(matches!(
            run_queryability(&[map], &lex, &EvalConfig::default()),
            Err(Error::UnresolvedKey(k)) if k == "class_1"
        ));
    }

    #[test]
    fn single_map_distinctness_has_no_inter_section() {
        let (map, _) = synth(1, 0.1);
        let d = run_distinctness(&[map], &EvalConfig::default()).unwrap().distinctness.unwrap();
        assert_eq!(d.intra.len(), 3);
        assert!(d.inter.is_none() && d.inter_skipped_reason.is_some());
    }

    #[test]
    fn full_ratio_reproduces_population_deviation() {
        let (map, _) = synth(4, 0.1);
        let config = EvalConfig {
            subsample_ratio: 1.0,
            ..Default::default()
        };
        let d = run_distinctness(std::slice::from_ref(&map), &config).unwrap().distinctness.unwrap();
        let sem = map.semantics.as_ref().unwrap();
        let all: Vec<Vec<f32>> = map.embeddings.iter().map(|(_, e)| e.to_vec()).collect();
        let d_map = crate::metrics::avg_abs_deviation(&SampleSet::from_vectors("m", None, &all).unwrap()).unwrap();
        for rec in &d.intra {
            let members: Vec<Vec<f32>> = map
                .embeddings
                .iter()
                .filter(|(v, _)| sem.label(v) == Some(rec.label))
                .map(|(_, e)| e.to_vec())
                .collect();
            let d_l = crate::metrics::avg_abs_deviation(&SampleSet::from_vectors("m", None, &members).unwrap()).unwrap();
            assert!((rec.d_label - d_l).abs() < 1e-12);
            assert!((rec.d_map - d_map).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_rejects_fractional_ladder() {
        let (map, lex) = synth(1, 0.0);
        let config = EvalConfig {
            resolutions: vec![0.02, 0.05],
            ..Default::default()
        };
        assert!(matches!(
            run_resolution_sweep(&[map], &lex, &config),
            Err(Error::NonIntegerRatio { .. })
        ));
    }
}
