//! Stratified subsampling and intra-map dispersion ratios.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{EmbeddingGrid, LabelId, SemanticGrid, VoxelIndex};

/// Embedding samples of one label (or of a whole map when `label` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub map_id: String,
    pub label: Option<LabelId>,
    pub label_name: Option<String>,
    pub dim: usize,
    pub voxels: Vec<VoxelIndex>,
    /// `voxels.len() * dim` components, one embedding per voxel.
    pub data: Vec<f32>,
}

impl SampleSet {
    pub fn from_vectors<E: AsRef<[f32]>>(map_id: &str, label: Option<LabelId>, samples: &[E]) -> Result<Self> {
        let dim = samples.first().ok_or(Error::Empty("sample set"))?.as_ref().len();
        let mut data = Vec::with_capacity(samples.len() * dim);
        for s in samples {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: s.len(),
                });
            }
            data.extend_from_slice(s);
        }
        Ok(Self {
            map_id: map_id.to_owned(),
            label,
            label_name: None,
            dim,
            voxels: (0..samples.len() as i32).map(|i| VoxelIndex::new(i, 0, 0)).collect(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the generator of one `(map, label)` stratum; stable across runs and platforms.
pub fn stratum_seed(seed: u64, map_id: &str, label: LabelId) -> u64 {
    // FNV-1a over the map id.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in map_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix(mix(seed ^ h) ^ u64::from(label))
}

/// Number of samples drawn from a stratum of `n` voxels.
pub fn stratum_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n)
}

/// Samples every label separately, without replacement, keeping roughly
/// `ratio` of its voxels. Returns the per-label sets (labels with at least one
/// voxel, ascending id) and their union as the map-level set.
pub fn stratified_subsample(
    map_id: &str,
    semantics: &SemanticGrid,
    embeddings: &EmbeddingGrid,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<SampleSet>, SampleSet)> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Invalid(format!("subsample ratio {ratio} outside (0, 1]")));
    }
    let mut strata: BTreeMap<LabelId, Vec<usize>> = BTreeMap::new();
    for (v, label) in &semantics.cells {
        let i = embeddings
            .position(v)
            .ok_or_else(|| Error::Invalid(format!("labelled voxel {v} has no embedding")))?;
        strata.entry(*label).or_default().push(i);
    }

    let dim = embeddings.dim();
    let mut sets = Vec::with_capacity(strata.len());
    let mut union: Vec<usize> = Vec::new();
    for (label, members) in strata {
        let k = stratum_size(members.len(), ratio);
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed, map_id, label));
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), k)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        union.extend_from_slice(&picked);
        sets.push(gather(map_id, Some(label), semantics, embeddings, &picked, dim));
    }
    union.sort_unstable();
    let map_set = gather(map_id, None, semantics, embeddings, &union, dim);
    Ok((sets, map_set))
}

fn gather(
    map_id: &str,
    label: Option<LabelId>,
    semantics: &SemanticGrid,
    embeddings: &EmbeddingGrid,
    indices: &[usize],
    dim: usize,
) -> SampleSet {
    let mut data = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        data.extend_from_slice(embeddings.embedding(i));
    }
    SampleSet {
        map_id: map_id.to_owned(),
        label,
        label_name: label.and_then(|l| semantics.vocabulary.name(l)).map(str::to_owned),
        dim,
        voxels: indices.iter().map(|i| embeddings.voxels()[*i]).collect(),
        data,
    }
}

/// Average absolute cosine deviation from the sample mean:
/// `(1/n) * sum |1 - cos(e_j, mean)|`.
pub fn avg_abs_deviation(samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut mean = vec![0.0f64; samples.dim];
    for s in samples.samples() {
        mean.iter_mut().zip(s).for_each(|(m, c)| *m += f64::from(*c));
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    if mean_sq == 0.0 {
        return Err(Error::Degenerate("mean of samples is the zero vector".into()));
    }
    let mut total = 0.0;
    for (s, v) in samples.samples().zip(&samples.voxels) {
        let s_sq: f64 = s.iter().map(|c| f64::from(*c).powi(2)).sum();
        if s_sq == 0.0 {
            return Err(Error::ZeroNorm { voxel: Some(*v) });
        }
        let dot: f64 = s.iter().zip(&mean).map(|(a, b)| f64::from(*a) * b).sum();
        // One square root keeps cos exactly 1 when a sample equals the mean.
        let cos = (dot / (s_sq * mean_sq).sqrt()).clamp(-1.0, 1.0);
        total += (1.0 - cos).abs();
    }
    Ok(total / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRecord {
    pub map_id: String,
    pub label: LabelId,
    pub label_name: String,
    pub samples: usize,
    pub d_label: f64,
    pub d_map: f64,
    pub ratio: f64,
}

/// Dispersion of a label's samples relative to the whole map.
pub fn intra_map_ratio(label_set: &SampleSet, map_set: &SampleSet) -> Result<IntraRecord> {
    let d_label = avg_abs_deviation(label_set)?;
    let d_map = avg_abs_deviation(map_set)?;
    if d_map <= 0.0 {
        return Err(Error::Degenerate(format!(
            "map {} has zero average deviation",
            map_set.map_id
        )));
    }
    Ok(IntraRecord {
        map_id: label_set.map_id.clone(),
        label: label_set.label.unwrap_or_default(),
        label_name: label_set.label_name.clone().unwrap_or_default(),
        samples: label_set.len(),
        d_label,
        d_map,
        ratio: d_label / d_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::LabelVocabulary;

    fn set(vs: &[Vec<f32>]) -> SampleSet {
        SampleSet::from_vectors("m", Some(0), vs).unwrap()
    }

    #[test]
    fn identical_and_single_samples() {
        assert_eq!(avg_abs_deviation(&set(&vec![vec![1.0, 2.0]; 4])).unwrap(), 0.0);
        assert_eq!(avg_abs_deviation(&set(&vec![vec![0.1, -0.7, 3.3]; 7])).unwrap(), 0.0);
        assert_eq!(avg_abs_deviation(&set(&[vec![0.3, -2.0]])).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_pair() {
        let d = avg_abs_deviation(&set(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        let expected = 1.0 - std::f64::consts::FRAC_PI_4.cos();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn zero_mean_is_rejected() {
        assert!(avg_abs_deviation(&set(&[vec![1.0, 0.0], vec![-1.0, 0.0]])).is_err());
    }

    #[test]
    fn ratio_examples() {
        let map = set(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!((intra_map_ratio(&map, &map).unwrap().ratio - 1.0).abs() < 1e-12);
        let tight = set(&vec![vec![1.0, 1.0]; 3]);
        assert_eq!(intra_map_ratio(&tight, &map).unwrap().ratio, 0.0);
        assert!(intra_map_ratio(&map, &tight).is_err());
    }

    #[test]
    fn hand_built_half_ratio() {
        // Symmetric pairs at +-a around a mean direction deviate by 1 - cos(a).
        let pair = |dev: f64| {
            let a = (1.0 - dev).acos();
            set(&[
                vec![a.cos() as f32, a.sin() as f32],
                vec![a.cos() as f32, -a.sin() as f32],
            ])
        };
        let r = intra_map_ratio(&pair(0.1), &pair(0.2)).unwrap();
        assert!((r.d_label - 0.1).abs() < 1e-6);
        assert!((r.d_map - 0.2).abs() < 1e-6);
        assert!((r.ratio - 0.5).abs() < 1e-5);
    }

    fn labelled_grid(counts: &[usize]) -> (SemanticGrid, EmbeddingGrid) {
        let mut cells = Vec::new();
        let mut labels = BTreeMap::new();
        let mut x = 0;
        for (l, n) in counts.iter().enumerate() {
            for _ in 0..*n {
                let v = VoxelIndex::new(x, 0, 0);
                cells.push((v, vec![1.0, l as f32]));
                labels.insert(v, l as LabelId);
                x += 1;
            }
        }
        let names = (0..counts.len()).map(|i| format!("l{i}")).collect();
        (
            SemanticGrid::new(labels, LabelVocabulary::new(names).unwrap()).unwrap(),
            EmbeddingGrid::from_cells(0.1, 2, cells).unwrap(),
        )
    }

    #[test]
    fn subsample_counts() {
        let (sem, emb) = labelled_grid(&[100, 7, 1]);
        let (sets, all) = stratified_subsample("m", &sem, &emb, 0.1, 5).unwrap();
        let sizes: Vec<_> = sets.iter().map(SampleSet::len).collect();
        assert_eq!(sizes, vec![10, 1, 1]);
        assert_eq!(all.len(), 12);
        let (sets, all) = stratified_subsample("m", &sem, &emb, 1.0, 5).unwrap();
        assert_eq!(sets.iter().map(SampleSet::len).collect::<Vec<_>>(), vec![100, 7, 1]);
        assert_eq!(all.len(), 108);
    }

    #[test]
    fn subsample_is_seeded() {
        let (sem, emb) = labelled_grid(&[200, 50]);
        let a = stratified_subsample("m", &sem, &emb, 0.1, 9).unwrap();
        let b = stratified_subsample("m", &sem, &emb, 0.1, 9).unwrap();
        assert_eq!(a, b);
        let c = stratified_subsample("m", &sem, &emb, 0.1, 10).unwrap();
        assert_ne!(a.0[0].voxels, c.0[0].voxels);
    }
}
