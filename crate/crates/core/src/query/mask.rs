use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::map::{LabelId, VoxelIndex};

/// A subset of a voxel universe, stored as one flag per universe voxel in
/// sorted voxel order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    universe: Arc<[VoxelIndex]>,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(universe: Arc<[VoxelIndex]>) -> Self {
        let bits = vec![false; universe.len()];
        Self { universe, bits }
    }

    pub fn full(universe: Arc<[VoxelIndex]>) -> Self {
        let bits = vec![true; universe.len()];
        Self { universe, bits }
    }

    /// Panics if `bits` does not have one entry per universe voxel.
    pub fn from_bits(universe: Arc<[VoxelIndex]>, bits: Vec<bool>) -> Self {
        assert_eq!(universe.len(), bits.len(), "mask length must match universe");
        Self { universe, bits }
    }

    pub fn from_fn(universe: Arc<[VoxelIndex]>, mut f: impl FnMut(usize, VoxelIndex) -> bool) -> Self {
        let bits = universe.iter().enumerate().map(|(i, v)| f(i, *v)).collect();
        Self { universe, bits }
    }

    pub fn universe(&self) -> &Arc<[VoxelIndex]> {
        &self.universe
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn positives(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.universe
            .iter()
            .zip(&self.bits)
            .filter(|(_, b)| **b)
            .map(|(v, _)| *v)
    }

    pub fn same_universe(&self, other: &BinaryMask) -> bool {
        Arc::ptr_eq(&self.universe, &other.universe) || self.universe == other.universe
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    /// Alternating run lengths over the sorted universe, starting with a
    /// (possibly empty) run of negatives.
    pub fn run_lengths(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        if len > 0 {
            runs.push(len);
        }
        runs
    }

    pub fn from_run_lengths(universe: Arc<[VoxelIndex]>, runs: &[u32]) -> Option<Self> {
        let mut bits = Vec::with_capacity(universe.len());
        for (i, r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, *r as usize));
        }
        (bits.len() == universe.len()).then_some(Self { universe, bits })
    }
}

/// Per-voxel similarity scores over a grid's universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    pub universe: Arc<[VoxelIndex]>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl ScoreField {
    pub fn stats(&self) -> Option<ScoreStats> {
        if self.scores.is_empty() {
            return None;
        }
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for s in &self.scores {
            min = min.min(*s);
            max = max.max(*s);
            sum += s;
        }
        Some(ScoreStats {
            min,
            max,
            mean: sum / self.scores.len() as f64,
        })
    }
}

/// Label assigned to every voxel of a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    pub universe: Arc<[VoxelIndex]>,
    pub labels: Vec<LabelId>,
}
