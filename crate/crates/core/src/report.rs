//! Result tables: per-level PM/FM with baseline deltas, per-target FM with a
//! macro average, and the distribution of self-generated tokens.
//!
//! All numbers are rendered with two decimals. Rendering is pure, so equal
//! inputs give byte-identical output in every format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::length::{Level, MetaLengthToken, TargetLength};
use crate::metrics::{match_flexible, ScoreCell, ScoreReport};
use crate::orchestrator::GenerationRecord;

const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidConfig(format!("unknown table format {other:?}"))),
        }
    }
}

/// Rounds to two decimals, half away from zero, and clears negative zero.
pub fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

fn fmt_delta(d: f64) -> String {
    let d = round2(d);
    if d > 0.0 {
        format!("+{d:.2}")
    } else {
        format!("{d:.2}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCells {
    pub pm: f64,
    pub fm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fm_delta: Option<f64>,
}

impl LevelCells {
    fn new(cell: &ScoreCell, baseline: Option<&ScoreCell>) -> Self {
        LevelCells {
            pm: cell.pm,
            fm: cell.fm,
            pm_delta: baseline.map(|b| round2(cell.pm - b.pm)),
            fm_delta: baseline.map(|b| round2(cell.fm - b.fm)),
        }
    }
}

/// One model's row in a level comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_label: String,
    pub per_level: BTreeMap<Level, LevelCells>,
    pub all_level: LevelCells,
}

impl ComparisonRow {
    pub fn has_deltas(&self) -> bool {
        self.all_level.pm_delta.is_some()
    }
}

/// Builds a level row; with a baseline every cell also carries
/// `treated - baseline` in percentage points.
pub fn tabulate_levels(
    model_label: &str,
    report: &ScoreReport,
    baseline: Option<&ScoreReport>,
) -> Result<ComparisonRow> {
    if let Some(base) = baseline {
        if !report.per_target.keys().eq(base.per_target.keys()) {
            return Err(Error::ReportMismatch);
        }
    }
    let per_level = report
        .per_level
        .iter()
        .map(|(level, cell)| {
            let base = baseline.and_then(|b| b.per_level.get(level));
            (*level, LevelCells::new(cell, base))
        })
        .collect();
    Ok(ComparisonRow {
        model_label: model_label.to_string(),
        per_level,
        all_level: LevelCells::new(&report.all_level, baseline.map(|b| &b.all_level)),
    })
}

/// FM per target in ascending target order, plus the unweighted mean of the
/// targets that have records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTable {
    pub fm: [Option<f64>; 9],
    pub avg_fm: Option<f64>,
}

impl TargetTable {
    pub fn from_report(report: &ScoreReport) -> Self {
        let mut fm = [None; 9];
        for (target, cell) in &report.per_target {
            fm[target.index()] = Some(cell.fm);
        }
        Self::from_columns(fm)
    }

    fn from_columns(fm: [Option<f64>; 9]) -> Self {
        let present: Vec<f64> = fm.iter().flatten().copied().collect();
        let avg_fm = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        TargetTable { fm, avg_fm }
    }

    pub fn headers() -> Vec<String> {
        TargetLength::ALL
            .iter()
            .map(|t| t.as_str().to_string())
            .chain(std::iter::once("Avg FM".to_string()))
            .collect()
    }

    pub fn cells(&self) -> Vec<String> {
        self.fm
            .iter()
            .chain(std::iter::once(&self.avg_fm))
            .map(|v| v.map_or_else(|| MISSING.to_string(), fmt2))
            .collect()
    }
}

/// Per-target FM from successful records that have a target.
pub fn tabulate_targets(records: &[GenerationRecord]) -> TargetTable {
    let mut n = [0usize; 9];
    let mut hits = [0usize; 9];
    for r in records.iter().filter(|r| r.is_ok()) {
        if let Some(t) = r.target {
            n[t.index()] += 1;
            hits[t.index()] += match_flexible(t, r.length) as usize;
        }
    }
    let mut fm = [None; 9];
    for i in 0..9 {
        if n[i] > 0 {
            fm[i] = Some(100.0 * hits[i] as f64 / n[i] as f64);
        }
    }
    TargetTable::from_columns(fm)
}

/// Share of each self-generated token among records that produced one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MltDistribution {
    pub counts: BTreeMap<MetaLengthToken, usize>,
    pub proportions: BTreeMap<MetaLengthToken, f64>,
    pub parsed: usize,
    pub unparsed: usize,
    /// `unparsed / (parsed + unparsed)`.
    pub unparsed_share: f64,
    /// Mean word count over all successful records.
    pub avg_word_count: f64,
}

pub fn mlt_distribution(records: &[GenerationRecord]) -> Result<MltDistribution> {
    let ok: Vec<&GenerationRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let mut counts: BTreeMap<MetaLengthToken, usize> = BTreeMap::new();
    for r in &ok {
        if let Some(t) = r.parsed_mlt {
            *counts.entry(t).or_default() += 1;
        }
    }
    let parsed: usize = counts.values().sum();
    if parsed == 0 {
        return Err(Error::DistributionUndefined);
    }
    let unparsed = ok.len() - parsed;
    let proportions = counts
        .iter()
        .map(|(t, &c)| (*t, c as f64 / parsed as f64))
        .collect();
    let avg_word_count = ok.iter().map(|r| r.length as f64).sum::<f64>() / ok.len() as f64;
    Ok(MltDistribution {
        counts,
        proportions,
        parsed,
        unparsed,
        unparsed_share: unparsed as f64 / ok.len() as f64,
        avg_word_count,
    })
}

/// Renders a header + rows grid as an aligned text table, CSV, or a markdown table.
pub fn render_table(headers: &[String], rows: &[Vec<String>], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(headers).expect("in-memory write");
            for row in rows {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            out.push_str(&line(headers));
            let seps: Vec<String> = headers
                .iter()
                .enumerate()
                .map(|(i, _)| if i == 0 { "---".into() } else { "---:".into() })
                .collect();
            out.push_str(&line(&seps));
            for row in rows {
                out.push_str(&line(row));
            }
            out
        }
        TableFormat::Text => {
            let width = |s: &str| s.chars().count();
            let mut widths: Vec<usize> = headers.iter().map(|h| width(h)).collect();
            for row in rows {
                for (i, c) in row.iter().enumerate() {
                    widths[i] = widths[i].max(width(c));
                }
            }
            let mut out = String::new();
            let mut line = |cells: &[String]| {
                let padded: Vec<String> = cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let pad = " ".repeat(widths[i] - width(c));
                        if i == 0 {
                            format!("{c}{pad}")
                        } else {
                            format!("{pad}{c}")
                        }
                    })
                    .collect();
                let _ = writeln!(out, "{}", padded.join("  ").trim_end());
            };
            line(headers);
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            line(&rule);
            for row in rows {
                line(row);
            }
            out
        }
    }
}

/// Level comparison table. Text and markdown put deltas next to the score,
/// as in `77.27 (+42.68)`; CSV gives them their own columns.
pub fn render_levels(rows: &[ComparisonRow], format: TableFormat) -> String {
    let with_deltas = rows.iter().any(ComparisonRow::has_deltas);
    let groups: Vec<String> = Level::ALL
        .iter()
        .map(|l| l.to_string())
        .chain(std::iter::once("All Level".to_string()))
        .collect();

    let mut headers = vec!["Model".to_string()];
    for g in &groups {
        for metric in ["PM", "FM"] {
            headers.push(format!("{g} {metric}"));
            if with_deltas && format == TableFormat::Csv {
                headers.push(format!("{g} {metric} delta"));
            }
        }
    }

    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.model_label.clone()];
            let level_cells = Level::ALL
                .iter()
                .map(|l| row.per_level.get(l))
                .chain(std::iter::once(Some(&row.all_level)));
            for lc in level_cells {
                for (value, delta) in lc.map_or([(None, None), (None, None)], |c| {
                    [(Some(c.pm), c.pm_delta), (Some(c.fm), c.fm_delta)]
                }) {
                    let value_s = value.map_or_else(|| MISSING.to_string(), fmt2);
                    match (format, with_deltas) {
                        (TableFormat::Csv, true) => {
                            cells.push(value_s);
                            cells.push(delta.map(fmt_delta).unwrap_or_default());
                        }
                        (_, true) => match delta {
                            Some(d) => cells.push(format!("{value_s} ({})", fmt_delta(d))),
                            None => cells.push(value_s),
                        },
                        (_, false) => cells.push(value_s),
                    }
                }
            }
            cells
        })
        .collect();
    render_table(&headers, &body, format)
}

/// Per-target FM table: a label column, nine target columns, then `Avg FM`.
pub fn render_targets(rows: &[(String, TargetTable)], format: TableFormat) -> String {
    let mut headers = vec!["Model".to_string()];
    headers.extend(TargetTable::headers());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, table)| {
            let mut cells = vec![label.clone()];
            cells.extend(table.cells());
            cells
        })
        .collect();
    render_table(&headers, &body, format)
}

/// Token distribution as `mlt,count,proportion` rows plus an `unparsed` row
/// and the average word count.
pub fn render_distribution(dist: &MltDistribution, format: TableFormat) -> String {
    let headers = vec!["mlt".to_string(), "count".to_string(), "proportion".to_string()];
    let mut body: Vec<Vec<String>> = dist
        .counts
        .iter()
        .map(|(t, c)| vec![t.surface().to_string(), c.to_string(), fmt2(dist.proportions[t])])
        .collect();
    body.push(vec!["unparsed".into(), dist.unparsed.to_string(), fmt2(dist.unparsed_share)]);
    body.push(vec!["Avg WC".into(), String::new(), fmt2(dist.avg_word_count)]);
    render_table(&headers, &body, format)
}
