use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::BinaryMask;

/// Precision, recall, F1 and IoU of a predicted mask against ground truth.
///
/// A ratio whose denominator is zero is reported as 0 and the corresponding
/// degenerate flag is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub degenerate: DegenerateFlags,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    /// Empty prediction.
    pub precision: bool,
    /// Empty ground truth.
    pub recall: bool,
    pub f1: bool,
    pub iou: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1 || self.iou
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl BinaryMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let (precision, dp) = ratio(tp, tp + fp);
        let (recall, dr) = ratio(tp, tp + fn_);
        // Harmonic mean of precision and recall, written over the counts.
        let (f1, df) = ratio(2 * tp, 2 * tp + fp + fn_);
        let (iou, di) = ratio(tp, tp + fp + fn_);
        Self {
            precision,
            recall,
            f1,
            iou,
            tp,
            fp,
            fn_,
            degenerate: DegenerateFlags {
                precision: dp,
                recall: dr,
                f1: df,
                iou: di,
            },
        }
    }

    pub fn truth_is_empty(&self) -> bool {
        self.tp + self.fn_ == 0
    }
}

pub fn binary_metrics(pred: &BinaryMask, truth: &BinaryMask) -> Result<BinaryMetrics> {
    if !pred.same_universe(truth) {
        return Err(Error::UniverseMismatch);
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(BinaryMetrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryabilitySummary {
    /// Unweighted mean over records with non-empty ground truth.
    pub macro_avg: MetricMeans,
    /// Metrics of the pooled confusion counts of every record.
    pub micro: BinaryMetrics,
    pub records: usize,
    pub macro_records: usize,
}

/// Macro and micro averages over `(map, query)` records.
pub fn aggregate_queryability<'a, I>(records: I) -> Result<QueryabilitySummary>
where
    I: IntoIterator<Item = &'a BinaryMetrics>,
{
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut sums = [0.0f64; 4];
    let (mut n, mut n_macro) = (0usize, 0usize);
    for m in records {
        n += 1;
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        if !m.truth_is_empty() {
            n_macro += 1;
            for (s, v) in sums.iter_mut().zip([m.precision, m.recall, m.f1, m.iou]) {
                *s += v;
            }
        }
    }
    if n_macro == 0 {
        return Err(Error::Empty("queryability records with non-empty ground truth"));
    }
    let k = n_macro as f64;
    Ok(QueryabilitySummary {
        macro_avg: MetricMeans {
            precision: sums[0] / k,
            recall: sums[1] / k,
            f1: sums[2] / k,
            iou: sums[3] / k,
        },
        micro: BinaryMetrics::from_counts(tp, fp, fn_),
        records: n,
        macro_records: n_macro,
    })
}
