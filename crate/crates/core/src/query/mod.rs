//! Open-vocabulary querying of embedding grids.

mod mask;
pub mod morphology;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::QueryLexicon;
use crate::map::{EmbeddingGrid, LabelId};

pub use mask::{BinaryMask, LabelField, ScoreField, ScoreStats};
pub use morphology::{binary_closing, binary_dilation, binary_erosion, blur_mask, gaussian_blur, gaussian_kernel};

/// Post-processing applied to the raw query-versus-negative mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostProcessParams {
    pub closing_iters: u32,
    /// Gaussian standard deviation in voxels; 0 disables blurring.
    pub blur_sigma: f64,
    pub threshold: f64,
    pub dilation_iters: u32,
}

impl Default for PostProcessParams {
    fn default() -> Self {
        Self {
            closing_iters: 1,
            blur_sigma: 1.0,
            threshold: 0.5,
            dilation_iters: 1,
        }
    }
}

impl PostProcessParams {
    /// No post-processing: the output equals the raw mask.
    pub const RAW: Self = Self {
        closing_iters: 0,
        blur_sigma: 0.0,
        threshold: 0.0,
        dilation_iters: 0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::Invalid(format!("blur sigma {} must be >= 0", self.blur_sigma)));
        }
        Ok(())
    }
}

fn norm64(v: &[f32]) -> f64 {
    v.iter().map(|c| f64::from(*c).powi(2)).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm64(a), norm64(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm { voxel: None });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of every map embedding to `q`; zero-norm map embeddings score -1.
pub fn score_map(grid: &EmbeddingGrid, q: &[f32]) -> Result<ScoreField> {
    if q.len() != grid.dim() {
        return Err(Error::DimMismatch {
            expected: grid.dim(),
            found: q.len(),
        });
    }
    let nq = norm64(q);
    if nq == 0.0 {
        return Err(Error::ZeroNorm { voxel: None });
    }
    let unit: Vec<f64> = q.iter().map(|c| f64::from(*c) / nq).collect();
    let scores = grid
        .as_flat()
        .par_chunks(grid.dim().max(1))
        .map(|e| {
            let ne = norm64(e);
            if ne == 0.0 {
                return -1.0;
            }
            let dot: f64 = e.iter().zip(&unit).map(|(x, y)| f64::from(*x) * y).sum();
            (dot / ne).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(ScoreField {
        universe: Arc::clone(grid.voxels()),
        scores,
    })
}

/// Mean of several prompt embeddings, L2-normalized.
pub fn prompt_average<E: AsRef<[f32]>>(embeddings: &[E]) -> Result<Vec<f32>> {
    let first = embeddings.first().ok_or(Error::Empty("prompt embeddings"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0f64; dim];
    for e in embeddings {
        let e = e.as_ref();
        if e.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: e.len(),
            });
        }
        sum.iter_mut().zip(e).for_each(|(s, c)| *s += f64::from(*c));
    }
    let n = sum.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err(Error::ZeroNorm { voxel: None });
    }
    Ok(sum.into_iter().map(|c| (c / n) as f32).collect())
}

/// Placeholder replaced by the query in prompt templates.
pub const TEMPLATE_SLOT: &str = "{}";

/// Embedding for `key`: the lexicon entry itself, or the normalized average of
/// the entries for every template instantiated with `key`.
pub fn resolve_query(lexicon: &QueryLexicon, key: &str, templates: &[String]) -> Result<Vec<f32>> {
    if templates.is_empty() {
        return Ok(lexicon.get(key)?.to_vec());
    }
    let prompts = templates
        .iter()
        .map(|t| lexicon.get(&t.replace(TEMPLATE_SLOT, key)))
        .collect::<Result<Vec<_>>>()?;
    prompt_average(&prompts)
}

/// Positive where the query scores at least as high as every negative, then
/// closing, blur, threshold and dilation in that order.
pub fn vlmaps_binary_query_multi<N: AsRef<[f32]>>(
    grid: &EmbeddingGrid,
    q: &[f32],
    negatives: &[N],
    params: &PostProcessParams,
) -> Result<BinaryMask> {
    params.validate()?;
    if negatives.is_empty() {
        return Err(Error::Empty("negative queries"));
    }
    let positive = score_map(grid, q)?;
    let negative_scores = negatives
        .iter()
        .map(|n| score_map(grid, n.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let raw = BinaryMask::from_fn(Arc::clone(grid.voxels()), |i, _| {
        // Zero-norm voxels have no direction and are never positive.
        norm64(grid.embedding(i)) > 0.0
            && negative_scores.iter().all(|n| positive.scores[i] >= n.scores[i])
    });
    Ok(post_process(&raw, params))
}

pub fn vlmaps_binary_query(
    grid: &EmbeddingGrid,
    q: &[f32],
    other: &[f32],
    params: &PostProcessParams,
) -> Result<BinaryMask> {
    vlmaps_binary_query_multi(grid, q, &[other], params)
}

pub fn post_process(raw: &BinaryMask, params: &PostProcessParams) -> BinaryMask {
    let mut mask = raw.clone();
    if params.closing_iters > 0 {
        mask = binary_closing(&mask, params.closing_iters);
    }
    if params.blur_sigma > 0.0 || params.threshold > 0.0 {
        let blurred = blur_mask(&mask, params.blur_sigma);
        // A strictly positive value is required so that a zero threshold
        // leaves the mask unchanged instead of admitting every voxel.
        mask = BinaryMask::from_bits(
            Arc::clone(mask.universe()),
            blurred
                .iter()
                .map(|b| *b > 0.0 && *b >= params.threshold)
                .collect(),
        );
    }
    if params.dilation_iters > 0 {
        mask = binary_dilation(&mask, params.dilation_iters);
    }
    mask
}

/// Assigns each voxel the label whose embedding is most cosine-similar,
/// ties going to the lowest label id.
pub fn segmentation_assign<E: AsRef<[f32]>>(grid: &EmbeddingGrid, label_embeddings: &[E]) -> Result<LabelField> {
    if label_embeddings.is_empty() {
        return Err(Error::Empty("label embeddings"));
    }
    if label_embeddings.len() > usize::from(LabelId::MAX) {
        return Err(Error::Invalid("too many labels".into()));
    }
    let fields = label_embeddings
        .iter()
        .map(|e| score_map(grid, e.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0;
            for (l, f) in fields.iter().enumerate().skip(1) {
                if f.scores[i] > fields[best].scores[i] {
                    best = l;
                }
            }
            best as LabelId
        })
        .collect();
    Ok(LabelField {
        universe: Arc::clone(grid.voxels()),
        labels,
    })
}

pub fn mask_from_labels(field: &LabelField, label: LabelId) -> BinaryMask {
    BinaryMask::from_bits(
        Arc::clone(&field.universe),
        field.labels.iter().map(|l| *l == label).collect(),
    )
}
