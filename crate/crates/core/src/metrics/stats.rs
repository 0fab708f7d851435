use crate::error::{Error, Result};

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile with midpoint interpolation: the mean of the order statistics at
/// `floor((n-1)q)` and `ceil((n-1)q)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    Some(0.5 * (sorted[h.floor() as usize] + sorted[h.ceil() as usize]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile_sorted(&sorted(values), 0.5)
}

/// Two-group Kruskal-Wallis H with mid-ranks and the tie correction.
/// Returns 0 when every pooled value is identical.
pub fn kruskal_wallis(group_a: &[f64], group_b: &[f64]) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Empty("kruskal-wallis group"));
    }
    if group_a.iter().chain(group_b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kruskal-wallis input".into()));
    }
    let mut pooled: Vec<(f64, usize)> = group_a
        .iter()
        .map(|v| (*v, 0))
        .chain(group_b.iter().map(|v| (*v, 1)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let mut rank_sums = [0.0f64; 2];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        for p in &pooled[i..=j] {
            rank_sums[p.1] += mid;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(0.0);
    }
    let sizes = [group_a.len() as f64, group_b.len() as f64];
    let s: f64 = rank_sums.iter().zip(sizes).map(|(r, k)| r * r / k).sum();
    let h = 12.0 / (nf * (nf + 1.0)) * s - 3.0 * (nf + 1.0);
    Ok((h / correction).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kruskal_wallis_by_hand() {
        // R1 = 6, R2 = 15: 12/42 * (36/3 + 225/3) - 21
        let h = kruskal_wallis(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((h - 27.0 / 7.0).abs() < 1e-12);
        assert!((h - 3.857142857).abs() < 1e-9);
    }

    #[test]
    fn kruskal_wallis_symmetry_and_ties() {
        let a = [0.3, 1.2, 1.2, 4.0];
        let b = [1.2, 2.0, 5.5];
        assert_eq!(kruskal_wallis(&a, &b).unwrap(), kruskal_wallis(&b, &a).unwrap());
        assert_eq!(kruskal_wallis(&[2.0, 2.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(kruskal_wallis(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert!(kruskal_wallis(&[], &[1.0]).is_err());
    }

    #[test]
    fn tie_corrected_value() {
        // Pooled [1,1,2,3]: ranks 1.5,1.5,3,4; groups {1,2} and {1,3}.
        // R = 4.5, 5.5; S = (20.25 + 30.25)/2 = 25.25; H0 = 12/20*25.25 - 15 = 0.15
        // correction 1 - 6/60 = 0.9
        let h = kruskal_wallis(&[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!((h - 0.15 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[7.0]), Some(7.0));
        assert_eq!(median(&[]), None);
    }
}
