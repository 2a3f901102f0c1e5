//! Aggregation of per-cell results into the benchmark table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::RunResult;
use crate::objective::Method;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// One persisted cell: the metrics plus enough identity to re-aggregate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultDoc {
    pub schema_version: u32,
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    pub support_quantile: f64,
    pub metrics: RunResult,
}

/// A table row: per-seed cells carry their seed, mean rows do not.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub method: Method,
    pub seed: Option<u64>,
    pub result: RunResult,
}

#[derive(Clone, Debug, Default)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

const COLUMNS: [&str; 10] = [
    "Method",
    "Seed",
    "Old After",
    "New After",
    "Harmonic Mean",
    "Anchor CKA",
    "Anchor Dist. Corr.",
    "Old Before",
    "Forgetting",
    "Support-In",
];

impl ReportTable {
    /// Order cells by method preset order then seed, and append one mean row
    /// per method. Mean rows are always recomputed, never stored.
    pub fn from_results(mut docs: Vec<ResultDoc>) -> ReportTable {
        let method_rank = |m: Method| Method::ALL.iter().position(|&x| x == m).unwrap();
        docs.sort_by_key(|d| (method_rank(d.method), d.seed));
        let mut rows = Vec::new();
        for &method in Method::ALL.iter() {
            let cells: Vec<&ResultDoc> = docs.iter().filter(|d| d.method == method).collect();
            if cells.is_empty() {
                continue;
            }
            for d in &cells {
                rows.push(ReportRow {
                    method,
                    seed: Some(d.seed),
                    result: d.metrics,
                });
            }
            rows.push(ReportRow {
                method,
                seed: None,
                result: mean_result(&cells),
            });
        }
        ReportTable { rows }
    }

    /// The mean row for one method, if present.
    pub fn mean_for(&self, method: Method) -> Option<&RunResult> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.seed.is_none())
            .map(|r| &r.result)
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("| {} |\n", COLUMNS.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                row.method,
                seed_label(row.seed),
                metric_cells(&row.result).join(" | ")
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.method,
                seed_label(row.seed),
                metric_cells(&row.result).join(",")
            ));
        }
        out
    }
}

fn seed_label(seed: Option<u64>) -> String {
    match seed {
        Some(s) => s.to_string(),
        None => "mean".to_string(),
    }
}

fn metric_cells(r: &RunResult) -> Vec<String> {
    [
        r.old_after,
        r.new_after,
        r.harmonic_mean,
        r.cka,
        r.dist_corr,
        r.old_before,
        r.forgetting,
        r.support_in,
    ]
    .iter()
    .map(|v| format!("{v:.4}"))
    .collect()
}

fn mean_result(cells: &[&ResultDoc]) -> RunResult {
    let n = cells.len() as f64;
    let mut acc = RunResult {
        old_before: 0.0,
        old_after: 0.0,
        new_after: 0.0,
        forgetting: 0.0,
        harmonic_mean: 0.0,
        cka: 0.0,
        dist_corr: 0.0,
        support_in: 0.0,
    };
    for d in cells {
        let m = &d.metrics;
        acc.old_before += m.old_before;
        acc.old_after += m.old_after;
        acc.new_after += m.new_after;
        acc.forgetting += m.forgetting;
        acc.harmonic_mean += m.harmonic_mean;
        acc.cka += m.cka;
        acc.dist_corr += m.dist_corr;
        acc.support_in += m.support_in;
    }
    acc.old_before /= n;
    acc.old_after /= n;
    acc.new_after /= n;
    acc.forgetting /= n;
    acc.harmonic_mean /= n;
    acc.cka /= n;
    acc.dist_corr /= n;
    acc.support_in /= n;
    acc
}

/// Collect every result.json under `results_dir` (out/<hash>/<seed>/<method>).
pub fn load_results(results_dir: &Path) -> Result<Vec<ResultDoc>> {
    let mut docs = Vec::new();
    if !results_dir.is_dir() {
        return Err(CoreError::validation(format!(
            "results directory {} does not exist",
            results_dir.display()
        )));
    }
    for seed_entry in sorted_dir(results_dir)? {
        if !seed_entry.is_dir() {
            continue;
        }
        for method_entry in sorted_dir(&seed_entry)? {
            let path = method_entry.join("result.json");
            if path.is_file() {
                let text = std::fs::read_to_string(&path)?;
                let doc: ResultDoc = serde_json::from_str(&text)?;
                docs.push(doc);
            }
        }
    }
    if docs.is_empty() {
        return Err(CoreError::validation(format!(
            "no result.json files under {}; nothing to report",
            results_dir.display()
        )));
    }
    Ok(docs)
}

fn sorted_dir(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut entries: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

/// Aggregate a results directory into report.md / report.csv contents.
pub fn emit_report(results_dir: &Path) -> Result<(String, String)> {
    let docs = load_results(results_dir)?;
    let table = ReportTable::from_results(docs);
    Ok((table.render_markdown(), table.render_csv()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(method: Method, seed: u64, old: f64, new: f64) -> ResultDoc {
        ResultDoc {
            schema_version: RESULT_SCHEMA_VERSION,
            config_hash: "x".into(),
            method,
            seed,
            support_quantile: 0.95,
            metrics: RunResult {
                old_before: 0.9,
                old_after: old,
                new_after: new,
                forgetting: 0.9 - old,
                harmonic_mean: crate::metrics::harmonic_mean(old, new),
                cka: 0.99,
                dist_corr: 0.98,
                support_in: 0.95,
            },
        }
    }

    #[test]
    fn known_row_renders_expected_harmonic() {
        let table = ReportTable::from_results(vec![doc(Method::PlainFt, 7, 0.5800, 0.8994)]);
        let md = table.render_markdown();
        assert!(md.contains("0.7052"), "markdown:\n{md}");
        assert_eq!(table.rows.len(), 2); // cell + mean
    }

    #[test]
    fn rows_ordered_by_method_then_seed_with_means() {
        let docs = vec![
            doc(Method::SpmaOg, 8, 0.9, 0.9),
            doc(Method::PlainFt, 8, 0.6, 0.9),
            doc(Method::PlainFt, 7, 0.5, 0.9),
            doc(Method::SpmaOg, 7, 0.92, 0.88),
        ];
        let table = ReportTable::from_results(docs);
        let labels: Vec<String> = table
            .rows
            .iter()
            .map(|r| format!("{}:{}", r.method, seed_label(r.seed)))
            .collect();
        assert_eq!(
            labels,
            vec![
                "PlainFT:7",
                "PlainFT:8",
                "PlainFT:mean",
                "SPMA-OG:7",
                "SPMA-OG:8",
                "SPMA-OG:mean"
            ]
        );
        let mean = table.mean_for(Method::PlainFt).unwrap();
        assert!((mean.old_after - 0.55).abs() < 1e-12);
    }

    #[test]
    fn csv_reparses_to_the_same_cells() {
        let table = ReportTable::from_results(vec![doc(Method::ReplayAnchor, 7, 0.9213, 0.8712)]);
        let csv_text = table.render_csv();
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(&headers[2], "Old After");
        assert_eq!(&headers[4], "Harmonic Mean");
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][0], "Replay-Anchor");
        let old_after: f64 = rows[0][2].parse().unwrap();
        assert!((old_after - 0.9213).abs() < 1e-9);
    }

    #[test]
    fn empty_results_dir_is_an_explicit_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_report(dir.path()).unwrap_err();
        assert!(err.to_string().contains("nothing to report"));
    }
}
