//! Axis-aligned 2D projections of voxel fields for top-down views.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::VoxelIndex;
use crate::query::{BinaryMask, ScoreField};

/// The axis collapsed by the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    /// Image (column, row) coordinates of a voxel.
    fn plane(self, v: VoxelIndex) -> (i32, i32) {
        match self {
            Axis::X => (v.y, v.z),
            Axis::Y => (v.x, v.z),
            Axis::Z => (v.x, v.y),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::Invalid(format!("unknown axis {s:?}, expected x, y or z"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionImage {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    /// Voxel coordinates of pixel (0, 0) in the projected plane.
    pub offset: [i32; 2],
    /// Row-major, `height` rows of `width` values.
    pub values: Vec<f64>,
    /// Value of pixels with no voxel in their column.
    pub fill: f64,
}

impl ProjectionImage {
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        (col < self.width && row < self.height).then(|| self.values[row * self.width + col])
    }
}

/// Projects one value per universe voxel along `axis`.
pub fn project_values(
    universe: &[VoxelIndex],
    values: &[f64],
    axis: Axis,
    aggregate: Aggregate,
    fill: f64,
) -> Result<ProjectionImage> {
    if universe.len() != values.len() {
        return Err(Error::Invalid(format!(
            "{} values for {} voxels",
            values.len(),
            universe.len()
        )));
    }
    if universe.is_empty() {
        return Ok(ProjectionImage {
            axis,
            width: 0,
            height: 0,
            offset: [0, 0],
            values: Vec::new(),
            fill,
        });
    }
    let (mut lo, mut hi) = ([i32::MAX; 2], [i32::MIN; 2]);
    for v in universe {
        let (c, r) = axis.plane(*v);
        lo = [lo[0].min(c), lo[1].min(r)];
        hi = [hi[0].max(c), hi[1].max(r)];
    }
    let width = (i64::from(hi[0]) - i64::from(lo[0]) + 1) as usize;
    let height = (i64::from(hi[1]) - i64::from(lo[1]) + 1) as usize;
    let mut acc = vec![f64::NEG_INFINITY; width * height];
    let mut counts = vec![0u32; width * height];
    for (v, x) in universe.iter().zip(values) {
        let (c, r) = axis.plane(*v);
        let p = (r - lo[1]) as usize * width + (c - lo[0]) as usize;
        match aggregate {
            Aggregate::Max => acc[p] = acc[p].max(*x),
            Aggregate::Mean => {
                if counts[p] == 0 {
                    acc[p] = 0.0;
                }
                acc[p] += x;
            }
        }
        counts[p] += 1;
    }
    let values = acc
        .into_iter()
        .zip(counts)
        .map(|(a, n)| match (n, aggregate) {
            (0, _) => fill,
            (_, Aggregate::Max) => a,
            (n, Aggregate::Mean) => a / f64::from(n),
        })
        .collect();
    Ok(ProjectionImage {
        axis,
        width,
        height,
        offset: lo,
        values,
        fill,
    })
}

/// Score projection; empty columns hold -1, the lowest cosine.
pub fn project_scores(field: &ScoreField, axis: Axis, aggregate: Aggregate) -> ProjectionImage {
    project_values(&field.universe, &field.scores, axis, aggregate, -1.0).expect("one score per voxel")
}

/// Occupancy projection: 1 where any voxel of the column is set, else 0.
pub fn project_mask(mask: &BinaryMask, axis: Axis) -> ProjectionImage {
    let values: Vec<f64> = mask.bits().iter().map(|b| f64::from(u8::from(*b))).collect();
    project_values(mask.universe(), &values, axis, Aggregate::Max, 0.0).expect("one bit per voxel")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn universe(vs: &[[i32; 3]]) -> Arc<[VoxelIndex]> {
        let mut v: Vec<VoxelIndex> = vs.iter().map(|a| VoxelIndex::new(a[0], a[1], a[2])).collect();
        v.sort();
        v.into()
    }

    #[test]
    fn full_column_is_one_pixel() {
        let u = universe(&[[0, 0, 0], [0, 0, 1], [0, 0, 2], [2, 1, 0]]);
        let mask = BinaryMask::from_fn(u, |_, v| v.x == 0);
        let img = project_mask(&mask, Axis::Z);
        assert_eq!((img.width, img.height, img.offset), (3, 2, [0, 0]));
        assert_eq!(img.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(img.values.len(), img.width * img.height);
    }

    #[test]
    fn max_and_mean() {
        let u = universe(&[[1, 5, 0], [1, 5, 3], [2, 5, 1]]);
        let field = ScoreField {
            universe: u,
            scores: vec![0.2, 0.6, -0.4],
        };
        let img = project_scores(&field, Axis::Z, Aggregate::Max);
        assert_eq!((img.width, img.height, img.offset), (2, 1, [1, 5]));
        assert_eq!(img.values, vec![0.6, -0.4]);
        let img = project_scores(&field, Axis::Z, Aggregate::Mean);
        assert!((img.values[0] - 0.4).abs() < 1e-12);
        let img = project_scores(&field, Axis::X, Aggregate::Max);
        assert_eq!((img.width, img.height, img.offset), (1, 4, [5, 0]));
        assert_eq!(img.values, vec![0.2, -0.4, -1.0, 0.6]);
        assert_eq!(img.get(0, 2), Some(-1.0));
    }

    #[test]
    fn parse_axis() {
        assert_eq!("y".parse::<Axis>().unwrap(), Axis::Y);
        assert!("w".parse::<Axis>().is_err());
    }
}
