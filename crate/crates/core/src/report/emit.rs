use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{QueryabilitySection, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    /// A directory with one CSV file per table.
    Csv,
}

/// Pretty-printed JSON. Field order is fixed by the report types and every
/// collection is pre-sorted, so equal reports serialize to equal bytes.
pub fn report_json(report: &Report) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Invalid(format!("report serialization: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            headers: headers.iter().map(|h| (*h).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(format!("csv: {e}")))
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

const QUERY_HEADERS: [&str; 12] = [
    "map_id", "query", "label", "precision", "recall", "f1", "iou", "tp", "fp", "fn", "empty_truth", "degenerate",
];

fn query_rows(section: &QueryabilitySection, prefix: &[String]) -> Vec<Vec<String>> {
    section
        .rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            let mut row = prefix.to_vec();
            row.extend([
                r.map_id.clone(),
                r.query.clone(),
                r.label.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.iou.to_string(),
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                r.empty_truth.to_string(),
                m.degenerate.any().to_string(),
            ]);
            row
        })
        .collect()
}

/// Flattens the sections present in `report` into tables.
pub fn report_csv_tables(report: &Report) -> Vec<CsvTable> {
    let mut tables = Vec::new();

    let mut norms = CsvTable::new("norm_stats", &["map_id", "mean_norm", "max_norm"]);
    norms.rows = report
        .norm_stats
        .iter()
        .map(|n| vec![n.map_id.clone(), n.stats.mean_norm.to_string(), n.stats.max_norm.to_string()])
        .collect();
    tables.push(norms);

    if let Some(q) = &report.queryability {
        let mut t = CsvTable::new("queryability", &QUERY_HEADERS);
        t.rows = query_rows(q, &[]);
        tables.push(t);

        let mut s = CsvTable::new(
            "queryability_summary",
            &["average", "precision", "recall", "f1", "iou", "records"],
        );
        if let Some(sum) = &q.summary {
            let (a, m) = (&sum.macro_avg, &sum.micro);
            s.rows.push(vec![
                "macro".to_owned(),
                a.precision.to_string(),
                a.recall.to_string(),
                a.f1.to_string(),
                a.iou.to_string(),
                sum.macro_records.to_string(),
            ]);
            s.rows.push(vec![
                "micro".to_owned(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.iou.to_string(),
                sum.records.to_string(),
            ]);
        }
        tables.push(s);
    }

    if let Some(d) = &report.distinctness {
        let mut intra = CsvTable::new(
            "intra_map",
            &["map_id", "label", "label_name", "samples", "d_label", "d_map", "ratio"],
        );
        intra.rows = d
            .intra
            .iter()
            .map(|r| {
                vec![
                    r.map_id.clone(),
                    r.label.to_string(),
                    r.label_name.clone(),
                    r.samples.to_string(),
                    r.d_label.to_string(),
                    r.d_map.to_string(),
                    r.ratio.to_string(),
                ]
            })
            .collect();
        tables.push(intra);

        let mut pairs = CsvTable::new(
            "inter_map_pairs",
            &["map_a", "label_a", "map_b", "label_b", "distance", "matching"],
        );
        let mut skipped = CsvTable::new("inter_map_skipped", &["map_id", "label", "samples"]);
        let mut labels = CsvTable::new(
            "label_separation",
            &[
                "label",
                "kruskal_wallis",
                "matching_median",
                "matching_q1",
                "matching_q3",
                "non_matching_median",
                "non_matching_q1",
                "non_matching_q3",
            ],
        );
        if let Some(inter) = &d.inter {
            pairs.rows = inter
                .pairs
                .iter()
                .map(|p| {
                    vec![
                        p.map_a.clone(),
                        p.label_a.clone(),
                        p.map_b.clone(),
                        p.label_b.clone(),
                        p.distance.to_string(),
                        p.matching.to_string(),
                    ]
                })
                .collect();
            skipped.rows = inter
                .skipped
                .iter()
                .map(|s| vec![s.map_id.clone(), s.label.clone(), s.samples.to_string()])
                .collect();
            labels.rows = inter
                .per_label
                .iter()
                .map(|l| {
                    vec![
                        l.label.clone(),
                        opt(l.kruskal_wallis),
                        opt(l.matching.map(|b| b.median)),
                        opt(l.matching.map(|b| b.q1)),
                        opt(l.matching.map(|b| b.q3)),
                        opt(l.non_matching.map(|b| b.median)),
                        opt(l.non_matching.map(|b| b.q1)),
                        opt(l.non_matching.map(|b| b.q3)),
                    ]
                })
                .collect();
        }
        tables.extend([pairs, skipped, labels]);
    }

    if let Some(sweep) = &report.sweep {
        let mut fp = CsvTable::new("sweep_footprint", &["resolution", "map_id", "voxels", "bytes"]);
        let mut headers = vec!["resolution"];
        headers.extend(QUERY_HEADERS);
        let mut q = CsvTable::new("sweep_queryability", &headers);
        for row in sweep {
            let res = row.resolution.to_string();
            for m in &row.maps {
                fp.rows.push(vec![res.clone(), m.map_id.clone(), m.voxels.to_string(), m.bytes.to_string()]);
            }
            q.rows.extend(query_rows(&row.queryability, std::slice::from_ref(&res)));
        }
        tables.extend([fp, q]);
    }
    tables
}

/// Writes `report` to `path`: a JSON file, or a directory of CSV files.
pub fn emit_report(report: &Report, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => fs::write(path, report_json(report)? + "\n").map_err(|e| Error::io(path, e)),
        ReportFormat::Csv => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for t in report_csv_tables(report) {
                let file = path.join(format!("{}.csv", t.name));
                fs::write(&file, t.to_csv()?).map_err(|e| Error::io(&file, e))?;
            }
            Ok(())
        }
    }
}
