//! Plot-ready summaries: histograms with a Gaussian KDE and box statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::quantile_sorted;

pub const KDE_POINTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub bandwidth: f64,
    pub kde_x: Vec<f64>,
    pub kde_density: Vec<f64>,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Scott's rule, `n^(-1/5) * sigma`, with a small positive floor for
/// constant data.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let h = (values.len() as f64).powf(-0.2) * sample_std(values);
    if h > 0.0 {
        h
    } else {
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        1e-3 * scale.max(1.0)
    }
}

/// Equal-width histogram over `[min, max]` plus a Gaussian KDE sampled at
/// [`KDE_POINTS`] points spanning four bandwidths beyond the data.
pub fn histogram_kde(values: &[f64], bins: usize, bandwidth: Option<f64>) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("histogram values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram values".into()));
    }
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo_edge, hi_edge) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi_edge - lo_edge) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo_edge + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for v in values {
        let b = (((v - lo_edge) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }

    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::Invalid(format!("bandwidth {h} must be positive"))),
        None => scott_bandwidth(values),
    };
    let (a, b) = (lo - 4.0 * h, hi + 4.0 * h);
    let step = (b - a) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kde_x: Vec<f64> = (0..KDE_POINTS).map(|i| a + step * i as f64).collect();
    let kde_density = kde_x
        .iter()
        .map(|x| {
            norm * values
                .iter()
                .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(Histogram {
        edges,
        counts,
        bandwidth: h,
        kde_x,
        kde_density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub n: usize,
    /// Values beyond the whiskers; omitted from the other statistics' display.
    pub outliers: usize,
}

/// Quartiles by midpoint interpolation and whiskers at 1.5 IQR, clipped to the data.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("box statistics values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25).expect("non-empty");
    let median = quantile_sorted(&v, 0.5).expect("non-empty");
    let q3 = quantile_sorted(&v, 0.75).expect("non-empty");
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        n: v.len(),
        outliers: v.len() - inside.len(),
    })
}
