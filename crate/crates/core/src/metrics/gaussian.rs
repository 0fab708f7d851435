//! Gaussian summaries of embedding populations and the closed-form
//! Wasserstein-2 distance between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::metrics::SampleSet;

pub const DEFAULT_MIN_SAMPLES: usize = 20;
pub const DEFAULT_DIAGONAL_LOADING: f64 = 1e-10;

/// Mean and population covariance of a sample set, projected onto the PSD
/// cone. The covariance square root is computed once and cached.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
    sqrt_cov: DMatrix<f64>,
}

/// Symmetrize, clamp eigenvalues at zero and add `loading` to the diagonal.
/// Returns the projected matrix and its principal square root.
pub fn psd_project(m: &DMatrix<f64>, loading: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(0.0) + loading);
    let v = &eig.eigenvectors;
    let proj = v * DMatrix::from_diagonal(&vals) * v.transpose();
    let root = v * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * v.transpose();
    // Symmetrize again to remove rounding asymmetry from the reconstruction.
    (
        (&proj + proj.transpose()) * 0.5,
        (&root + root.transpose()) * 0.5,
    )
}

impl GaussianSummary {
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>, n: usize, loading: f64) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian summary parameters".into()));
        }
        let (cov, sqrt_cov) = psd_project(&cov, loading);
        Ok(Self { mean, cov, n, sqrt_cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sqrt_cov(&self) -> &DMatrix<f64> {
        &self.sqrt_cov
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SummaryError {
    /// Fewer samples than required; carries the count.
    TooFewSamples(usize),
}

/// Gaussian summary with population (divide-by-n) covariance.
///
/// Returns `Ok(Err(TooFewSamples))` below `min_samples` so the caller can
/// record the skipped label.
pub fn gaussian_summary(
    samples: &SampleSet,
    min_samples: usize,
    loading: f64,
) -> Result<std::result::Result<GaussianSummary, SummaryError>> {
    let n = samples.len();
    if n < min_samples.max(1) {
        return Ok(Err(SummaryError::TooFewSamples(n)));
    }
    let d = samples.dim;
    let mut mean = DVector::<f64>::zeros(d);
    for s in samples.samples() {
        for (m, c) in mean.iter_mut().zip(s) {
            *m += f64::from(*c);
        }
    }
    mean /= n as f64;
    let mut centred = DMatrix::<f64>::zeros(d, n);
    for (j, s) in samples.samples().enumerate() {
        for (i, c) in s.iter().enumerate() {
            centred[(i, j)] = f64::from(*c) - mean[i];
        }
    }
    let cov = &centred * centred.transpose() / n as f64;
    GaussianSummary::from_parts(mean, cov, n, loading).map(Ok)
}

/// `|mu1 - mu2|^2 + tr(P1 + P2 - 2 (P2^1/2 P1 P2^1/2)^1/2)`, clamped at zero.
///
/// The trace of the inner root equals the nuclear norm of `P1^1/2 P2^1/2`,
/// since `P2^1/2 P1 P2^1/2 = (P1^1/2 P2^1/2)^T (P1^1/2 P2^1/2)`; singular values
/// avoid square roots of tiny, noisy eigenvalues and make the result symmetric
/// in its arguments.
pub fn wasserstein2(g1: &GaussianSummary, g2: &GaussianSummary) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimMismatch {
            expected: g1.dim(),
            found: g2.dim(),
        });
    }
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let cross = g1.sqrt_cov() * g2.sqrt_cov();
    let nuclear: f64 = cross.singular_values().iter().sum();
    let d = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * nuclear;
    if !d.is_finite() {
        return Err(Error::NonFinite("wasserstein distance".into()));
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(mu: f64, var: f64) -> GaussianSummary {
        GaussianSummary::from_parts(DVector::from_element(1, mu), DMatrix::from_element(1, 1, var), 100, 0.0).unwrap()
    }

    #[test]
    fn identical_samples_have_zero_covariance() {
        let s = SampleSet::from_vectors("m", Some(0), &vec![vec![0.5f32, 2.0]; 25]).unwrap();
        let g = gaussian_summary(&s, 20, DEFAULT_DIAGONAL_LOADING).unwrap().unwrap();
        assert!((g.mean[0] - 0.5).abs() < 1e-12 && (g.mean[1] - 2.0).abs() < 1e-12);
        assert!(g.cov.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn population_variance() {
        let s = SampleSet::from_vectors("m", Some(0), &[vec![-1.0f32], vec![1.0]]).unwrap();
        let g = gaussian_summary(&s, 2, 0.0).unwrap().unwrap();
        assert_eq!(g.mean[0], 0.0);
        assert!((g.cov[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_is_a_skip() {
        let s = SampleSet::from_vectors("m", Some(0), &vec![vec![1.0f32]; 5]).unwrap();
        assert_eq!(gaussian_summary(&s, 20, 0.0).unwrap().unwrap_err(), SummaryError::TooFewSamples(5));
    }

    #[test]
    fn scalar_cases() {
        assert!((wasserstein2(&scalar(0.0, 1.0), &scalar(3.0, 1.0)).unwrap() - 9.0).abs() < 1e-12);
        assert!((wasserstein2(&scalar(0.0, 1.0), &scalar(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-12);
        let g = scalar(1.5, 2.0);
        assert!(wasserstein2(&g, &g).unwrap() < 1e-9);
    }

    #[test]
    fn diagonal_decomposes_per_axis() {
        let g1 = GaussianSummary::from_parts(
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 9.0])),
            10,
            0.0,
        )
        .unwrap();
        let g2 = GaussianSummary::from_parts(
            DVector::from_vec(vec![2.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
            10,
            0.0,
        )
        .unwrap();
        // (4 + 1) + (0 + 4)
        assert!((wasserstein2(&g1, &g2).unwrap() - 9.0).abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch() {
        let g2 = GaussianSummary::from_parts(DVector::zeros(2), DMatrix::identity(2, 2), 3, 0.0).unwrap();
        assert!(wasserstein2(&scalar(0.0, 1.0), &g2).is_err());
    }

    #[test]
    fn sampled_diagonal_covariance() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let sd = [0.5f64, 1.0, 2.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<f32>> = (0..10_000)
            .map(|_| sd.iter().map(|s| (s * rng.sample::<f64, _>(StandardNormal)) as f32).collect())
            .collect();
        let set = SampleSet::from_vectors("m", Some(0), &samples).unwrap();
        let g = gaussian_summary(&set, 20, 0.0).unwrap().unwrap();
        for (i, s) in sd.iter().enumerate() {
            assert!((g.cov[(i, i)] / (s * s) - 1.0).abs() < 0.05);
        }
    }
}
