use lsm_core::ingest::OTHER_KEY;
use lsm_core::metrics::binary_metrics;
use lsm_core::projection::{project_scores, Aggregate, Axis, ProjectionImage};
use lsm_core::query::{resolve_query, score_map, ScoreStats};
use lsm_core::report::{predict_segmentation, predict_vlmaps, truth_mask, QueryMode, SegmentationModel};
use lsm_core::{BinaryMetrics, LabelId, MapBundle, PostProcessParams, QueryLexicon};
use serde::{Deserialize, Serialize};

use crate::ApiError;

fn default_negative() -> String {
    OTHER_KEY.to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
    #[serde(default)]
    pub mode: QueryMode,
    #[serde(default)]
    pub params: PostProcessParams,
    /// Average the lexicon entries of every prompt template.
    #[serde(default)]
    pub prompt_engineering: bool,
    #[serde(default = "default_negative")]
    pub negative: String,
    #[serde(default)]
    pub truth_label: Option<LabelId>,
    #[serde(default)]
    pub axis: Axis,
    #[serde(default)]
    pub aggregate: Aggregate,
}

impl QueryRequest {
    pub fn for_key(key: &str) -> Self {
        Self {
            key: Some(key.to_owned()),
            embedding: None,
            mode: QueryMode::default(),
            params: PostProcessParams::default(),
            prompt_engineering: false,
            negative: default_negative(),
            truth_label: None,
            axis: Axis::default(),
            aggregate: Aggregate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub map_id: String,
    pub positives: usize,
    /// Alternating run lengths over the sorted voxels, starting with negatives.
    pub mask: Vec<u32>,
    pub score_stats: Option<ScoreStats>,
    pub projection: ProjectionImage,
    pub metrics: Option<BinaryMetrics>,
}

/// Runs one query with the same library calls as the batch evaluation, so
/// equal parameters give bit-identical masks and metrics.
pub fn execute_query(
    map: &MapBundle,
    lexicon: &QueryLexicon,
    templates: &[String],
    request: &QueryRequest,
) -> Result<QueryResponse, ApiError> {
    let templates: &[String] = if request.prompt_engineering {
        if templates.is_empty() {
            return Err(ApiError::bad_request("prompt engineering requested but no templates loaded"));
        }
        templates
    } else {
        &[]
    };
    let query = match (&request.key, &request.embedding) {
        (Some(key), None) => resolve_query(lexicon, key, templates)?,
        (None, Some(e)) => e.clone(),
        _ => return Err(ApiError::bad_request("exactly one of key and embedding is required")),
    };
    if let Some(label) = request.truth_label {
        let n = map.vocabulary().map_or(0, |v| v.len());
        if usize::from(label) >= n {
            return Err(ApiError::bad_request(format!("truth label {label} outside vocabulary of {n} labels")));
        }
    }
    let scores = score_map(&map.embeddings, &query)?;

    let mask = match request.mode {
        QueryMode::VlmapsQuery => {
            let negative = resolve_query(lexicon, &request.negative, templates)?;
            predict_vlmaps(map, &query, &[negative], &request.params)?
        }
        QueryMode::Segmentation => {
            let key = request
                .key
                .as_deref()
                .ok_or_else(|| ApiError::bad_request("segmentation mode needs a lexicon key"))?;
            let label = map
                .vocabulary()
                .and_then(|v| v.id_of(key))
                .ok_or_else(|| ApiError::bad_request(format!("key {key:?} is not a label of map {}", map.map_id)))?;
            let model = SegmentationModel::new(map, lexicon, templates)?;
            predict_segmentation(&model, label)
        }
    };
    let metrics = match request.truth_label {
        Some(label) => Some(binary_metrics(&mask, &truth_mask(map, label)?)?),
        None => None,
    };
    Ok(QueryResponse {
        map_id: map.map_id.clone(),
        positives: mask.count(),
        mask: mask.run_lengths(),
        score_stats: scores.stats(),
        projection: project_scores(&scores, request.axis, request.aggregate),
        metrics,
    })
}
