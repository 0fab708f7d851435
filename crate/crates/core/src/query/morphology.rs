//! Binary morphology and Gaussian blur over sparse voxel universes.
//!
//! Every operation runs on the dense bounding box of the universe. Cells
//! outside the universe are false for dilation and zero for blur, and all
//! outputs are restricted back to the universe. Erosion is the adjoint of the
//! restricted dilation: a voxel survives if every *universe* voxel in its
//! 3x3x3 neighbourhood is set, so unobserved space never erodes a surface.

use std::sync::Arc;

use rayon::prelude::*;

use crate::map::VoxelIndex;
use crate::query::BinaryMask;

/// Dense bounding-box layout of a universe, z fastest.
pub(crate) struct Lattice {
    dims: [usize; 3],
    /// Dense index of each universe voxel, in universe order.
    dense: Vec<usize>,
}

impl Lattice {
    pub(crate) fn new(universe: &[VoxelIndex]) -> Self {
        if universe.is_empty() {
            return Self {
                dims: [0; 3],
                dense: Vec::new(),
            };
        }
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for v in universe {
            for (a, c) in v.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
        let dims = [0, 1, 2].map(|a| (i64::from(hi[a]) - i64::from(lo[a]) + 1) as usize);
        let min = VoxelIndex::new(lo[0], lo[1], lo[2]);
        let dense = universe
            .iter()
            .map(|v| {
                let x = (v.x - min.x) as usize;
                let y = (v.y - min.y) as usize;
                let z = (v.z - min.z) as usize;
                (x * dims[1] + y) * dims[2] + z
            })
            .collect();
        Self { dims, dense }
    }

    fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    fn scatter(&self, bits: &[bool]) -> Vec<u8> {
        let mut out = vec![0u8; self.cells()];
        for (d, b) in self.dense.iter().zip(bits) {
            out[*d] = u8::from(*b);
        }
        out
    }

    fn gather_bits(&self, dense: &[u8]) -> Vec<bool> {
        self.dense.iter().map(|d| dense[*d] != 0).collect()
    }
}

/// Applies `f` to every 1-D line of the volume along `axis`.
fn for_each_line<T: Copy + Send + Sync>(
    data: &mut [T],
    dims: [usize; 3],
    axis: usize,
    f: impl Fn(&mut [T]) + Sync,
) {
    let len = dims[axis];
    if len == 0 || data.is_empty() {
        return;
    }
    let stride = match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    };
    if stride == 1 {
        data.par_chunks_mut(len).for_each(&f);
        return;
    }
    // Lines along x or y: gather into a scratch buffer per line.
    let outer = data.len() / (len * stride);
    let block = len * stride;
    data.par_chunks_mut(block).take(outer).for_each(|chunk| {
        let mut line = Vec::with_capacity(len);
        for offset in 0..stride {
            line.clear();
            line.extend((0..len).map(|i| chunk[offset + i * stride]));
            f(&mut line);
            for (i, v) in line.iter().enumerate() {
                chunk[offset + i * stride] = *v;
            }
        }
    });
}

fn dilate_line(line: &mut [u8]) {
    let src = line.to_vec();
    let n = src.len();
    for i in 0..n {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        line[i] = src[lo..=hi].iter().copied().max().unwrap_or(0);
    }
}

/// One dilation step with the 3x3x3 box, not yet restricted to the universe.
fn dilate_dense(dense: &mut [u8], dims: [usize; 3]) {
    for axis in 0..3 {
        for_each_line(dense, dims, axis, dilate_line);
    }
}

fn dilate_bits(lattice: &Lattice, bits: &[bool], iterations: u32) -> Vec<bool> {
    let mut bits = bits.to_vec();
    for _ in 0..iterations {
        let mut dense = lattice.scatter(&bits);
        dilate_dense(&mut dense, lattice.dims);
        bits = lattice.gather_bits(&dense);
    }
    bits
}

fn erode_bits(lattice: &Lattice, bits: &[bool], iterations: u32) -> Vec<bool> {
    let mut bits = bits.to_vec();
    for _ in 0..iterations {
        // Eroded iff a universe neighbour is unset: complement, dilate, complement.
        let holes: Vec<bool> = bits.iter().map(|b| !b).collect();
        let grown = dilate_bits(lattice, &holes, 1);
        bits = grown.into_iter().map(|h| !h).collect();
    }
    bits
}

pub fn binary_dilation(mask: &BinaryMask, iterations: u32) -> BinaryMask {
    let lattice = Lattice::new(mask.universe());
    let bits = dilate_bits(&lattice, mask.bits(), iterations);
    BinaryMask::from_bits(Arc::clone(mask.universe()), bits)
}

pub fn binary_erosion(mask: &BinaryMask, iterations: u32) -> BinaryMask {
    let lattice = Lattice::new(mask.universe());
    let bits = erode_bits(&lattice, mask.bits(), iterations);
    BinaryMask::from_bits(Arc::clone(mask.universe()), bits)
}

/// `iterations` dilations followed by as many erosions.
pub fn binary_closing(mask: &BinaryMask, iterations: u32) -> BinaryMask {
    let lattice = Lattice::new(mask.universe());
    let dilated = dilate_bits(&lattice, mask.bits(), iterations);
    let bits = erode_bits(&lattice, &dilated, iterations);
    BinaryMask::from_bits(Arc::clone(mask.universe()), bits)
}

/// Discrete Gaussian truncated at `ceil(3 sigma)` and renormalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn convolve_line(line: &mut [f64], kernel: &[f64]) {
    let r = (kernel.len() / 2) as isize;
    let src = line.to_vec();
    let n = src.len() as isize;
    for i in 0..n {
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            let j = i + k as isize - r;
            if (0..n).contains(&j) {
                acc += w * src[j as usize];
            }
        }
        line[i as usize] = acc;
    }
}

/// Separable Gaussian blur of `values` (one per universe voxel), zero-padded
/// outside the universe; returns the blurred values at universe voxels.
pub fn gaussian_blur(universe: &[VoxelIndex], values: &[f64], sigma: f64) -> Vec<f64> {
    assert_eq!(universe.len(), values.len());
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let lattice = Lattice::new(universe);
    let kernel = gaussian_kernel(sigma);
    let mut dense = vec![0.0f64; lattice.cells()];
    for (d, v) in lattice.dense.iter().zip(values) {
        dense[*d] = *v;
    }
    for axis in 0..3 {
        for_each_line(&mut dense, lattice.dims, axis, |line| convolve_line(line, &kernel));
    }
    lattice.dense.iter().map(|d| dense[*d]).collect()
}

/// Blurred 0/1 indicator of a mask.
pub fn blur_mask(mask: &BinaryMask, sigma: f64) -> Vec<f64> {
    let indicator: Vec<f64> = mask.bits().iter().map(|b| f64::from(u8::from(*b))).collect();
    gaussian_blur(mask.universe(), &indicator, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: i32) -> Arc<[VoxelIndex]> {
        let mut v = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    v.push(VoxelIndex::new(x, y, z));
                }
            }
        }
        v.into()
    }

    #[test]
    fn empty_mask_stays_empty() {
        let m = BinaryMask::empty(cube(4));
        assert!(binary_dilation(&m, 2).is_empty());
        assert!(binary_closing(&m, 2).is_empty());
    }

    #[test]
    fn single_voxel_dilates_to_box() {
        let u = cube(5);
        let centre = VoxelIndex::new(0, 2, 2);
        let m = BinaryMask::from_fn(u.clone(), |_, v| v == centre);
        let d = binary_dilation(&m, 1);
        // x = -1 is outside the universe, so only 2 * 3 * 3 voxels remain.
        assert_eq!(d.count(), 18);
        for v in d.positives() {
            assert!((v.x - centre.x).abs() <= 1 && (v.y - centre.y).abs() <= 1 && (v.z - centre.z).abs() <= 1);
        }
    }

    #[test]
    fn closing_fills_a_one_voxel_gap() {
        let u: Arc<[VoxelIndex]> = (0..7).map(|x| VoxelIndex::new(x, 0, 0)).collect();
        let m = BinaryMask::from_bits(u, vec![true, true, true, false, true, true, true]);
        assert_eq!(binary_closing(&m, 1).count(), 7);
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.3, 1.0, 2.5] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_of_full_region_blurs_to_one() {
        let u = cube(9);
        let m = BinaryMask::full(u.clone());
        let b = blur_mask(&m, 1.0);
        let centre = u.binary_search(&VoxelIndex::new(4, 4, 4)).unwrap();
        assert!((b[centre] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn isolated_voxel_peak_below_half() {
        let u = cube(7);
        let c = VoxelIndex::new(3, 3, 3);
        let m = BinaryMask::from_fn(u.clone(), |_, v| v == c);
        let b = blur_mask(&m, 1.0);
        let peak = b.iter().cloned().fold(0.0, f64::max);
        let w0 = gaussian_kernel(1.0)[3];
        assert!((peak - w0.powi(3)).abs() < 1e-12);
        assert!(peak < 0.5);
    }
}
