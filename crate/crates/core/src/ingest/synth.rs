//! Seeded synthetic maps with known class structure.
//!
//! Class mean directions come from `direction_seed` alone, so maps generated
//! with different `seed`s share the same semantic "vocabulary" geometry, much
//! like real scenes embedded by the same encoder.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{grow_instances, Connectivity, QueryLexicon};
use crate::map::{EmbeddingGrid, LabelVocabulary, MapBundle, SemanticGrid, VoxelIndex};

pub const OTHER_KEY: &str = "other";

/// Minimum pairwise angle between class mean directions.
pub const MIN_CLASS_SEPARATION_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub voxels_per_class: usize,
    pub dim: usize,
    /// Standard deviation (radians) of each tangent-space component of the
    /// perturbation applied to a class direction.
    pub angular_noise: f64,
    pub cell_size: f32,
    /// Side of the cube each class blob is drawn from, in voxels.
    pub blob_extent: usize,
    pub seed: u64,
    pub direction_seed: u64,
}

impl SyntheticSpec {
    pub fn new(class_count: usize, voxels_per_class: usize, dim: usize, angular_noise: f64, seed: u64) -> Self {
        Self {
            class_count,
            voxels_per_class,
            dim,
            angular_noise,
            cell_size: 0.02,
            blob_extent: (voxels_per_class as f64).cbrt().ceil() as usize,
            seed,
            direction_seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::Invalid("class count must be at least 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::Invalid("dim must be at least 2".into()));
        }
        if self.voxels_per_class == 0 {
            return Err(Error::Invalid("voxels per class must be positive".into()));
        }
        if !(self.angular_noise >= 0.0 && self.angular_noise.is_finite()) {
            return Err(Error::Invalid("angular noise must be non-negative".into()));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::Invalid("cell size must be positive".into()));
        }
        if self.blob_extent.pow(3) < self.voxels_per_class {
            return Err(Error::Invalid(format!(
                "blob extent {} holds fewer than {} voxels",
                self.blob_extent, self.voxels_per_class
            )));
        }
        Ok(())
    }
}

pub fn class_name(c: usize) -> String {
    format!("class_{c}")
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Greedy farthest-point selection of `k` unit directions from a seeded pool.
pub fn class_directions(k: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Vec<f64>> = (0..(32 * k).max(256)).map(|_| random_unit(&mut rng, dim)).collect();
    let mut chosen = vec![0usize];
    // Largest cosine to any chosen direction, per pool entry.
    let mut closest: Vec<f64> = pool.iter().map(|p| dot(p, &pool[0])).collect();
    while chosen.len() < k {
        let (best, _) = closest
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("pool larger than k");
        chosen.push(best);
        for (c, p) in closest.iter_mut().zip(&pool) {
            *c = c.max(dot(p, &pool[best]));
        }
    }
    let dirs: Vec<Vec<f64>> = chosen.into_iter().map(|i| pool[i].clone()).collect();
    let max_cos = MIN_CLASS_SEPARATION_DEG.to_radians().cos();
    for i in 0..dirs.len() {
        for j in 0..i {
            if dot(&dirs[i], &dirs[j]) > max_cos + 1e-12 {
                return Err(Error::Invalid(format!(
                    "cannot place {k} class directions {MIN_CLASS_SEPARATION_DEG} degrees apart in {dim} dimensions"
                )));
            }
        }
    }
    Ok(dirs)
}

/// Unit vector orthogonal to every direction when they do not span the space,
/// otherwise the normalized negative of their mean.
fn other_direction(dirs: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = dirs[0].len();
    if dirs.len() < dim {
        // Gram-Schmidt against an orthonormal basis of the class directions.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for d in dirs {
            let mut v = d.clone();
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&v);
            if n > 1e-9 {
                basis.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        loop {
            let mut v = random_unit(rng, dim);
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&v);
            if n > 1e-6 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
    let mut mean = vec![0.0; dim];
    for d in dirs {
        mean.iter_mut().zip(d).for_each(|(m, x)| *m -= x);
    }
    let n = norm(&mean);
    if n < 1e-9 {
        return random_unit(rng, dim);
    }
    mean.into_iter().map(|x| x / n).collect()
}

/// Perturbs unit `mu` along a Gaussian tangent vector via the exponential map.
fn perturb(mu: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return mu.to_vec();
    }
    let mut t: Vec<f64> = (0..mu.len())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let p = dot(&t, mu);
    t.iter_mut().zip(mu).for_each(|(x, m)| *x -= p * m);
    let angle = norm(&t);
    if angle < 1e-15 {
        return mu.to_vec();
    }
    let (s, c) = angle.sin_cos();
    let out: Vec<f64> = mu.iter().zip(&t).map(|(m, x)| c * m + s * x / angle).collect();
    let n = norm(&out);
    out.into_iter().map(|x| x / n).collect()
}

/// Returns the map (with semantics and grown instances) and a lexicon holding
/// each exact class direction plus an `"other"` entry.
pub fn generate_synthetic_map(spec: &SyntheticSpec) -> Result<(MapBundle, QueryLexicon)> {
    spec.validate()?;
    let dirs = class_directions(spec.class_count, spec.dim, spec.direction_seed)?;
    let mut dir_rng = ChaCha8Rng::seed_from_u64(spec.direction_seed ^ 0x9E37_79B9_7F4A_7C15);
    let other = other_direction(&dirs, &mut dir_rng);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let extent = spec.blob_extent as i32;
    let mut cells = Vec::with_capacity(spec.class_count * spec.voxels_per_class);
    let mut labels = BTreeMap::new();
    for (c, mu) in dirs.iter().enumerate() {
        // Blobs sit in separate slabs along x with a gap of at least two voxels;
        // the seed jitters each blob inside its slab.
        let jitter = [rng.random_range(0..3), rng.random_range(0..3), rng.random_range(0..3)];
        let origin = VoxelIndex::new(c as i32 * (extent + 4) + jitter[0], jitter[1], jitter[2]);
        for i in 0..spec.voxels_per_class as i32 {
            let v = origin.offset(i / (extent * extent), (i / extent) % extent, i % extent);
            let e: Vec<f32> = perturb(mu, spec.angular_noise, &mut rng)
                .into_iter()
                .map(|x| x as f32)
                .collect();
            cells.push((v, e));
            labels.insert(v, c as u16);
        }
    }

    let names: Vec<String> = (0..spec.class_count).map(class_name).collect();
    let vocab = LabelVocabulary::new(names.clone())?;
    let embeddings = EmbeddingGrid::from_cells(spec.cell_size, spec.dim, cells)?;
    let semantics = SemanticGrid::new(labels, vocab)?;
    let instances = grow_instances(&semantics, semantics.len(), Connectivity::Six);
    let bundle = MapBundle::new(
        format!("synth-s{}", spec.seed),
        embeddings,
        Some(semantics),
        Some(instances),
    )?;

    let mut entries: BTreeMap<String, Vec<f32>> = names
        .into_iter()
        .zip(&dirs)
        .map(|(n, d)| (n, d.iter().map(|x| *x as f32).collect()))
        .collect();
    entries.insert(OTHER_KEY.into(), other.iter().map(|x| *x as f32).collect());
    Ok((bundle, QueryLexicon::new(spec.dim, entries)?))
}

/// A single-label solid cube of side `side_m` metres, for footprint and
/// resolution experiments.
pub fn solid_cube(side_m: f64, cell_size: f32, dim: usize, seed: u64) -> Result<(MapBundle, QueryLexicon)> {
    let side = (side_m / f64::from(cell_size)).round() as usize;
    let mut spec = SyntheticSpec::new(1, side.pow(3), dim, 0.05, seed);
    spec.cell_size = cell_size;
    spec.blob_extent = side;
    let (mut bundle, lex) = generate_synthetic_map(&spec)?;
    // Pin the cube to the origin so block boundaries align with it.
    let shifted = bundle
        .embeddings
        .iter()
        .map(|(v, e)| (v, e.to_vec()))
        .collect::<Vec<_>>();
    let min = shifted.iter().map(|(v, _)| *v).min().unwrap_or(VoxelIndex::new(0, 0, 0));
    let cells = shifted
        .into_iter()
        .map(|(v, e)| (v.offset(-min.x, -min.y, -min.z), e));
    let embeddings = EmbeddingGrid::from_cells(cell_size, dim, cells)?;
    let sem = bundle.semantics.take().expect("synthetic maps carry semantics");
    let labels = sem
        .cells
        .iter()
        .map(|(v, l)| (v.offset(-min.x, -min.y, -min.z), *l))
        .collect();
    let semantics = SemanticGrid::new(labels, sem.vocabulary)?;
    let instances = grow_instances(&semantics, semantics.len(), Connectivity::Six);
    let bundle = MapBundle::new(
        format!("cube-s{seed}"),
        embeddings,
        Some(semantics),
        Some(instances),
    )?;
    Ok((bundle, lex))
}
