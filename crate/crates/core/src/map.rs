//! Sparse voxel-grid data model for embedding maps and their ground truth.
//!
//! Grids are keyed by integer [`VoxelIndex`] with the grid origin fixed at the
//! world origin, so a world position maps to `floor(position / cell_size)`.
//! Embedding grids keep their voxels sorted by `(x, y, z)`; that sorted order is
//! the canonical voxel order used by masks, archives and the HTTP API.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{grow_instances, Connectivity};

pub type LabelId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelIndex {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn from_position(position: [f64; 3], cell_size: f32) -> Self {
        let c = f64::from(cell_size);
        Self::new(
            (position[0] / c).floor() as i32,
            (position[1] / c).floor() as i32,
            (position[2] / c).floor() as i32,
        )
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// Index of the block of side `k` containing this voxel.
    pub fn coarsen(self, k: i32) -> Self {
        Self::new(
            self.x.div_euclid(k),
            self.y.div_euclid(k),
            self.z.div_euclid(k),
        )
    }

    pub fn to_array(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }
}

impl fmt::Display for VoxelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() > usize::from(LabelId::MAX) {
            return Err(Error::Invalid(format!(
                "vocabulary of {} labels exceeds the 16-bit id range",
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Invalid(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, id: LabelId) -> Option<&str> {
        self.labels.get(usize::from(id)).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.labels
            .iter()
            .position(|l| l == name)
            .map(|i| i as LabelId)
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        (0..self.labels.len()).map(|i| i as LabelId)
    }
}

/// Per-voxel embeddings stored as one flat `f32` buffer in sorted voxel order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrid {
    cell_size: f32,
    dim: usize,
    voxels: Arc<[VoxelIndex]>,
    data: Vec<f32>,
}

impl EmbeddingGrid {
    pub fn empty(cell_size: f32, dim: usize) -> Result<Self> {
        Self::from_cells(cell_size, dim, std::iter::empty())
    }

    /// Builds a grid from `(voxel, embedding)` pairs in any order.
    pub fn from_cells<I>(cell_size: f32, dim: usize, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (VoxelIndex, Vec<f32>)>,
    {
        let mut cells: Vec<(VoxelIndex, Vec<f32>)> = cells.into_iter().collect();
        cells.sort_by_key(|(v, _)| *v);
        let mut voxels = Vec::with_capacity(cells.len());
        let mut data = Vec::with_capacity(cells.len() * dim);
        for (v, e) in cells {
            if voxels.last() == Some(&v) {
                return Err(Error::Invalid(format!("duplicate voxel {v}")));
            }
            if e.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: e.len(),
                });
            }
            voxels.push(v);
            data.extend_from_slice(&e);
        }
        Self::from_sorted_parts(cell_size, dim, voxels, data)
    }

    /// Builds a grid from voxels already sorted by `(x, y, z)` and a flat buffer.
    pub fn from_sorted_parts(
        cell_size: f32,
        dim: usize,
        voxels: Vec<VoxelIndex>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Invalid(format!("cell size {cell_size} must be positive")));
        }
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        if data.len() != voxels.len() * dim {
            return Err(Error::Invalid(format!(
                "{} embedding components for {} voxels of dim {dim}",
                data.len(),
                voxels.len()
            )));
        }
        if voxels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("voxels not strictly sorted".into()));
        }
        if let Some(i) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding component at voxel {}",
                voxels[i / dim]
            )));
        }
        Ok(Self {
            cell_size,
            dim,
            voxels: voxels.into(),
            data,
        })
    }

    pub fn cell_size(&self) -> f32 {
        self.cell_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// The sorted voxel key set, shared with every mask built over this grid.
    pub fn voxels(&self) -> &Arc<[VoxelIndex]> {
        &self.voxels
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, v: &VoxelIndex) -> Option<usize> {
        self.voxels.binary_search(v).ok()
    }

    pub fn get(&self, v: &VoxelIndex) -> Option<&[f32]> {
        self.position(v).map(|i| self.embedding(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelIndex, &[f32])> + '_ {
        self.voxels
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Replaces the embedding buffer while keeping the key set shared.
    fn with_data(&self, data: Vec<f32>) -> Self {
        Self {
            cell_size: self.cell_size,
            dim: self.dim,
            voxels: Arc::clone(&self.voxels),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    pub cells: BTreeMap<VoxelIndex, LabelId>,
    pub vocabulary: LabelVocabulary,
}

impl SemanticGrid {
    pub fn new(cells: BTreeMap<VoxelIndex, LabelId>, vocabulary: LabelVocabulary) -> Result<Self> {
        if let Some((v, id)) = cells
            .iter()
            .find(|(_, id)| usize::from(**id) >= vocabulary.len())
        {
            return Err(Error::Invalid(format!(
                "label id {id} at voxel {v} outside vocabulary of {}",
                vocabulary.len()
            )));
        }
        Ok(Self { cells, vocabulary })
    }

    pub fn label(&self, v: &VoxelIndex) -> Option<LabelId> {
        self.cells.get(v).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Voxel count per label id.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocabulary.len()];
        for id in self.cells.values() {
            counts[usize::from(*id)] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstanceGrid {
    pub cells: BTreeMap<VoxelIndex, u32>,
}

impl InstanceGrid {
    pub fn instance_count(&self) -> usize {
        self.cells
            .values()
            .max()
            .map_or(0, |m| *m as usize + 1)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub map_id: String,
    pub embeddings: EmbeddingGrid,
    pub semantics: Option<SemanticGrid>,
    pub instances: Option<InstanceGrid>,
}

impl MapBundle {
    pub fn new(
        map_id: impl Into<String>,
        embeddings: EmbeddingGrid,
        semantics: Option<SemanticGrid>,
        instances: Option<InstanceGrid>,
    ) -> Result<Self> {
        let bundle = Self {
            map_id: map_id.into(),
            embeddings,
            semantics,
            instances,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        let keys = self.embeddings.voxels();
        if let Some(sem) = &self.semantics {
            if sem.cells.len() != keys.len() || !sem.cells.keys().eq(keys.iter()) {
                return Err(Error::Invalid(
                    "semantic key set differs from embedding key set".into(),
                ));
            }
        }
        if let Some(inst) = &self.instances {
            if inst.cells.len() != keys.len() || !inst.cells.keys().eq(keys.iter()) {
                return Err(Error::Invalid(
                    "instance key set differs from embedding key set".into(),
                ));
            }
            let k = inst.instance_count();
            let mut seen = vec![false; k];
            for id in inst.cells.values() {
                seen[*id as usize] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Invalid("instance ids are not contiguous".into()));
            }
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.embeddings.len()
    }

    pub fn vocabulary(&self) -> Option<&LabelVocabulary> {
        self.semantics.as_ref().map(|s| &s.vocabulary)
    }
}

/// Integer block factor `to / from`, accepting float rounding noise.
pub fn block_factor(from: f32, to: f32) -> Result<u32> {
    let ratio = f64::from(to) / f64::from(from);
    let k = ratio.round();
    if !(k >= 1.0) || (ratio - k).abs() > 1e-4 * k || k > f64::from(i32::MAX) {
        return Err(Error::NonIntegerRatio { from, to });
    }
    Ok(k as u32)
}

/// Aggregates a map onto a coarser grid whose cell size is an integer multiple
/// of the current one.
///
/// Each output voxel averages the embeddings of its occupied children (in
/// `f64`) and takes their majority label, ties going to the lowest id.
/// Instances, when present, are recomputed from the coarse semantics.
pub fn regrid(bundle: &MapBundle, new_cell_size: f32) -> Result<MapBundle> {
    let cell = bundle.embeddings.cell_size();
    let k = block_factor(cell, new_cell_size)?;
    if k == 1 {
        return Ok(bundle.clone());
    }
    let k = k as i32;
    let dim = bundle.embeddings.dim();

    // Sorted fine voxels do not map to sorted blocks, so group through a BTreeMap.
    let mut blocks: BTreeMap<VoxelIndex, (Vec<f64>, u32, BTreeMap<LabelId, u32>)> =
        BTreeMap::new();
    for (v, e) in bundle.embeddings.iter() {
        let entry = blocks
            .entry(v.coarsen(k))
            .or_insert_with(|| (vec![0.0; dim], 0, BTreeMap::new()));
        for (acc, c) in entry.0.iter_mut().zip(e) {
            *acc += f64::from(*c);
        }
        entry.1 += 1;
        if let Some(label) = bundle.semantics.as_ref().and_then(|s| s.label(&v)) {
            *entry.2.entry(label).or_insert(0) += 1;
        }
    }

    let mut voxels = Vec::with_capacity(blocks.len());
    let mut data = Vec::with_capacity(blocks.len() * dim);
    let mut labels = BTreeMap::new();
    for (block, (sum, count, votes)) in blocks {
        voxels.push(block);
        let n = f64::from(count);
        data.extend(sum.iter().map(|s| (s / n) as f32));
        // BTreeMap iterates ids ascending, so strict `>` keeps the lowest id on ties.
        let mut best: Option<(LabelId, u32)> = None;
        for (id, c) in votes {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((id, c));
            }
        }
        if let Some((id, _)) = best {
            labels.insert(block, id);
        }
    }

    let embeddings = EmbeddingGrid::from_sorted_parts(new_cell_size, dim, voxels, data)?;
    let semantics = match &bundle.semantics {
        Some(s) => Some(SemanticGrid::new(labels, s.vocabulary.clone())?),
        None => None,
    };
    let instances = match (&bundle.instances, &semantics) {
        (Some(_), Some(sem)) if !sem.is_empty() => {
            Some(grow_instances(sem, sem.len().max(1), Connectivity::Six))
        }
        (Some(_), Some(_)) => Some(InstanceGrid::default()),
        // Without semantics there is nothing to grow from; every block is its own instance.
        (Some(_), None) => Some(InstanceGrid {
            cells: embeddings
                .voxels()
                .iter()
                .enumerate()
                .map(|(i, v)| (*v, i as u32))
                .collect(),
        }),
        (None, _) => None,
    };
    MapBundle::new(bundle.map_id.clone(), embeddings, semantics, instances)
}

pub const ARCHIVE_HEADER_BYTES: u64 = 4 + 2 + 4 + 4 + 8 + 1;

/// Exact size in bytes of the LSM archive [`crate::ingest::write_map_archive`] emits.
pub fn footprint_bytes(bundle: &MapBundle) -> u64 {
    let vocab = bundle
        .vocabulary()
        .map_or(0, |v| v.labels().iter().map(|l| 2 + l.len() as u64).sum());
    let record = 12 + 2 + 4 + 4 * bundle.embeddings.dim() as u64;
    ARCHIVE_HEADER_BYTES + 2 + vocab + bundle.voxel_count() as u64 * record
}

pub fn l2_normalize(grid: &EmbeddingGrid) -> Result<EmbeddingGrid> {
    let mut data = Vec::with_capacity(grid.as_flat().len());
    for (v, e) in grid.iter() {
        let norm = e.iter().map(|c| f64::from(*c).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { voxel: Some(v) });
        }
        data.extend(e.iter().map(|c| (f64::from(*c) / norm) as f32));
    }
    Ok(grid.with_data(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_norm: f64,
    pub max_norm: f64,
}

pub fn norm_stats(grid: &EmbeddingGrid) -> Result<NormStats> {
    if grid.is_empty() {
        return Err(Error::Empty("norm statistics of an empty grid"));
    }
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (_, e) in grid.iter() {
        let n = e.iter().map(|c| f64::from(*c).powi(2)).sum::<f64>().sqrt();
        sum += n;
        max = max.max(n);
    }
    Ok(NormStats {
        mean_norm: sum / grid.len() as f64,
        max_norm: max,
    })
}
