//! Post-processing of results files: single- vs multi-site comparison and
//! plot-ready throughput tables.
//!
//! Comparison supports two join modes. The literal mode pairs rows whose
//! total one-way delay is equal. The by-link mode pairs a single-site row at
//! delay d with the multi-site row at 2d — the pairing where both topologies
//! run the same netem delay on each emulated interface (single-site has one,
//! multi-site has two in series).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::kernel::ms_to_us;
use crate::runner::ResultRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Input(String),
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(ReportError::Input(format!("{}: no result rows", path.display())));
    }
    Ok(rows)
}

/// One matched pair of single- and multi-site measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    /// Single-site total delay for the pair (the label both sides share in
    /// by-link mode).
    pub x_total_ms: f64,
    /// Multi-site total delay actually matched (equals `x_total_ms` in
    /// literal mode, twice it in by-link mode).
    pub multi_x_total_ms: f64,
    pub users: u32,
    pub processing_ms: f64,
    pub single_rps: f64,
    pub multi_rps: f64,
    /// `multi_rps / single_rps`; absent when the single side measured zero.
    pub ratio: Option<f64>,
}

#[derive(Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Keys `(x_total_ms, users, processing_ms)` present on one side only.
    pub unmatched_single: Vec<(f64, u32, f64)>,
    pub unmatched_multi: Vec<(f64, u32, f64)>,
}

type Key = (u64, u32, u64); // (x_total µs, users, processing µs)

/// Mean throughput per grid point, keyed in integer microseconds so float
/// labels like 12.5 join exactly.
fn fold_by_key(rows: &[ResultRow]) -> BTreeMap<Key, (f64, f64, u32)> {
    let mut folded: BTreeMap<Key, (f64, f64, u32)> = BTreeMap::new();
    for row in rows {
        let key = (ms_to_us(row.x_total_ms), row.users, ms_to_us(row.processing_ms));
        let entry = folded.entry(key).or_insert((0.0, row.x_total_ms, 0));
        entry.0 += row.throughput_rps;
        entry.2 += 1;
    }
    for entry in folded.values_mut() {
        entry.0 /= entry.2 as f64;
    }
    folded
}

fn label_of(key: &Key, folded: &BTreeMap<Key, (f64, f64, u32)>) -> (f64, u32, f64) {
    let (_, label_ms, _) = folded[key];
    (label_ms, key.1, key.2 as f64 / 1000.0)
}

/// Join single- and multi-site rows into ratio rows. `by_link` selects the
/// per-interface pairing (multi at twice the single delay); otherwise totals
/// are matched literally. Repetitions are averaged before joining.
pub fn compare(
    single: &[ResultRow],
    multi: &[ResultRow],
    by_link: bool,
) -> Result<Comparison, ReportError> {
    for (rows, want) in [(single, "single_site"), (multi, "multi_site")] {
        if let Some(bad) = rows.iter().find(|r| r.topology != want) {
            return Err(ReportError::Input(format!(
                "expected only {} rows, found topology {:?}",
                want, bad.topology
            )));
        }
    }
    let single_folded = fold_by_key(single);
    let multi_folded = fold_by_key(multi);

    let mut rows = Vec::new();
    let mut matched_multi: Vec<Key> = Vec::new();
    let mut unmatched_single = Vec::new();
    for (key, &(single_rps, label_ms, _)) in &single_folded {
        let multi_key = if by_link { (key.0 * 2, key.1, key.2) } else { *key };
        match multi_folded.get(&multi_key) {
            Some(&(multi_rps, multi_label_ms, _)) => {
                matched_multi.push(multi_key);
                rows.push(ComparisonRow {
                    x_total_ms: label_ms,
                    multi_x_total_ms: multi_label_ms,
                    users: key.1,
                    processing_ms: key.2 as f64 / 1000.0,
                    single_rps,
                    multi_rps,
                    ratio: if single_rps > 0.0 { Some(multi_rps / single_rps) } else { None },
                });
            }
            None => unmatched_single.push(label_of(key, &single_folded)),
        }
    }
    let unmatched_multi: Vec<_> = multi_folded
        .keys()
        .filter(|k| !matched_multi.contains(k))
        .map(|k| label_of(k, &multi_folded))
        .collect();

    if rows.is_empty() {
        return Err(ReportError::Input(
            "no grid points matched between the two result sets".to_string(),
        ));
    }
    Ok(Comparison { rows, unmatched_single, unmatched_multi })
}

/// One plot table: throughput as a function of processing time, one column
/// per delay setting.
pub struct PlotTable {
    pub topology: String,
    pub users: u32,
    /// `processing_ms` plus one `x<delay>` column per delay, ascending.
    pub header: Vec<String>,
    /// One row per processing point, ascending; first value is the
    /// processing time, the rest mean throughput per delay.
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn file_name(&self) -> String {
        format!("plot-{}-u{}.csv", self.topology, self.users)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Pivot result rows into one table per (topology, user count).
pub fn plot_tables(rows: &[ResultRow]) -> Vec<PlotTable> {
    // (topology, users) -> delay µs -> processing µs -> (sum, count)
    let mut groups: BTreeMap<(String, u32), BTreeMap<u64, BTreeMap<u64, (f64, u32)>>> =
        BTreeMap::new();
    for row in rows {
        let cell = groups
            .entry((row.topology.clone(), row.users))
            .or_default()
            .entry(ms_to_us(row.x_total_ms))
            .or_default()
            .entry(ms_to_us(row.processing_ms))
            .or_insert((0.0, 0));
        cell.0 += row.throughput_rps;
        cell.1 += 1;
    }
    groups
        .into_iter()
        .map(|((topology, users), by_delay)| {
            let delays: Vec<u64> = by_delay.keys().copied().collect();
            let mut procs: Vec<u64> = Vec::new();
            for col in by_delay.values() {
                for &p in col.keys() {
                    if !procs.contains(&p) {
                        procs.push(p);
                    }
                }
            }
            procs.sort_unstable();
            let mut header = vec!["processing_ms".to_string()];
            header.extend(delays.iter().map(|&d| format!("x{}", d as f64 / 1000.0)));
            let rows = procs
                .iter()
                .map(|&p| {
                    let mut row = vec![p as f64 / 1000.0];
                    for &d in &delays {
                        let (sum, count) =
                            by_delay[&d].get(&p).copied().unwrap_or((f64::NAN, 1));
                        row.push(sum / count as f64);
                    }
                    row
                })
                .collect();
            PlotTable { topology, users, header, rows }
        })
        .collect()
}
