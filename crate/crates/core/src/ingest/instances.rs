//! Instance ground truth by region growing over semantic labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::map::{InstanceGrid, SemanticGrid, VoxelIndex};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    #[default]
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets that come after the voxel in `(x, y, z)` order.
    fn forward_offsets(self) -> Vec<(i32, i32, i32)> {
        match self {
            Connectivity::Six => vec![(0, 0, 1), (0, 1, 0), (1, 0, 0)],
            Connectivity::TwentySix => {
                let mut out = Vec::with_capacity(13);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if (dx, dy, dz) > (0, 0, 0) {
                                out.push((dx, dy, dz));
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Region growing: every voxel starts as its own cluster, and each iteration
/// joins every cluster to its lowest-numbered adjacent cluster of equal label.
/// Stops when nothing joins or after `max_iters` iterations.
///
/// Every non-converged iteration removes at least one cluster, so
/// `max_iters >= voxel count` always yields exact connected components.
/// Instance ids are renumbered `0..K` in sorted voxel order.
pub fn grow_instances(
    semantics: &SemanticGrid,
    max_iters: usize,
    connectivity: Connectivity,
) -> InstanceGrid {
    let voxels: Vec<VoxelIndex> = semantics.cells.keys().copied().collect();
    let labels: Vec<_> = semantics.cells.values().copied().collect();
    let index: HashMap<VoxelIndex, usize> =
        voxels.iter().enumerate().map(|(i, v)| (*v, i)).collect();

    let mut edges = Vec::new();
    for (i, v) in voxels.iter().enumerate() {
        for (dx, dy, dz) in connectivity.forward_offsets() {
            if let Some(&j) = index.get(&v.offset(dx, dy, dz)) {
                if labels[i] == labels[j] {
                    edges.push((i, j));
                }
            }
        }
    }

    let mut parent: Vec<usize> = (0..voxels.len()).collect();
    for _ in 0..max_iters {
        // Lowest adjacent root per root, computed against the state at the start of the step.
        let roots: Vec<usize> = (0..parent.len()).map(|i| find(&mut parent, i)).collect();
        let mut target = roots.clone();
        for &(i, j) in &edges {
            let (ri, rj) = (roots[i], roots[j]);
            if ri != rj {
                let lo = ri.min(rj);
                let hi = ri.max(rj);
                target[hi] = target[hi].min(lo);
            }
        }
        let mut joined = false;
        for r in 0..parent.len() {
            if roots[r] == r && target[r] != r {
                let a = find(&mut parent, r);
                let b = find(&mut parent, target[r]);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                    joined = true;
                }
            }
        }
        if !joined {
            break;
        }
    }

    let mut renumber = HashMap::new();
    let mut cells = std::collections::BTreeMap::new();
    for (i, v) in voxels.iter().enumerate() {
        let root = find(&mut parent, i);
        let next = renumber.len() as u32;
        let id = *renumber.entry(root).or_insert(next);
        cells.insert(*v, id);
    }
    InstanceGrid { cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::LabelVocabulary;

    fn grid(cells: &[((i32, i32, i32), u16)]) -> SemanticGrid {
        let vocab = LabelVocabulary::new(vec!["A".into(), "B".into()]).unwrap();
        SemanticGrid::new(
            cells
                .iter()
                .map(|((x, y, z), l)| (VoxelIndex::new(*x, *y, *z), *l))
                .collect(),
            vocab,
        )
        .unwrap()
    }

    #[test]
    fn uniform_strip_is_one_instance() {
        let g = grid(&[((0, 0, 0), 0), ((1, 0, 0), 0), ((2, 0, 0), 0)]);
        assert_eq!(grow_instances(&g, 3, Connectivity::Six).instance_count(), 1);
    }

    #[test]
    fn label_change_splits_strip() {
        let g = grid(&[((0, 0, 0), 0), ((1, 0, 0), 0), ((2, 0, 0), 1)]);
        let inst = grow_instances(&g, 3, Connectivity::Six);
        assert_eq!(inst.instance_count(), 2);
        assert_eq!(inst.cells[&VoxelIndex::new(0, 0, 0)], 0);
        assert_eq!(inst.cells[&VoxelIndex::new(1, 0, 0)], 0);
        assert_eq!(inst.cells[&VoxelIndex::new(2, 0, 0)], 1);
    }

    #[test]
    fn diagonal_contact_depends_on_connectivity() {
        let g = grid(&[((0, 0, 0), 0), ((1, 1, 0), 0)]);
        assert_eq!(grow_instances(&g, 2, Connectivity::Six).instance_count(), 2);
        assert_eq!(grow_instances(&g, 2, Connectivity::TwentySix).instance_count(), 1);
    }

    #[test]
    fn iteration_limit_leaves_partial_regions() {
        let cells: Vec<_> = (0..16).map(|x| ((x, 0, 0), 0u16)).collect();
        let g = grid(&cells);
        let exact = grow_instances(&g, 16, Connectivity::Six);
        assert_eq!(exact.instance_count(), 1);
        let zero = grow_instances(&g, 0, Connectivity::Six);
        assert_eq!(zero.instance_count(), 16);
    }
}
