use std::cmp::Ordering;
use std::fmt::Write as _;

use super::MetricReport;
use crate::correlation::MetricTriple;
use crate::Dimension;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// One comma-separated row per method.
    Delimited,
    /// Aligned plain-text table with best (`*`) and second-best (`+`) per column.
    Table,
}

pub const CSV_HEADER: [&str; 16] = [
    "rank",
    "method",
    "plcc_mapping",
    "n_trials",
    "video_quality_srcc",
    "video_quality_plcc",
    "video_quality_krcc",
    "editing_alignment_srcc",
    "editing_alignment_plcc",
    "editing_alignment_krcc",
    "structural_consistency_srcc",
    "structural_consistency_plcc",
    "structural_consistency_krcc",
    "overall_srcc",
    "overall_plcc",
    "overall_krcc",
];

/// A delimited report row parsed back from text.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub rank: String,
    pub method: String,
    pub plcc_mapping: String,
    pub n_trials: usize,
    /// Three dimensions then overall, each SRCC/PLCC/KRCC.
    pub values: [f64; 12],
}

fn columns(r: &MetricReport) -> [f64; 12] {
    let mut out = [0.0; 12];
    let triples: Vec<&MetricTriple> = Dimension::ALL
        .iter()
        .map(|&d| r.dimension(d))
        .chain(std::iter::once(&r.overall_average))
        .collect();
    for (k, t) in triples.iter().enumerate() {
        out[3 * k] = t.srcc;
        out[3 * k + 1] = t.plcc;
        out[3 * k + 2] = t.krcc;
    }
    out
}

/// Descending overall SRCC, ties broken by method name.
fn ranked(reports: &[MetricReport]) -> Vec<&MetricReport> {
    let mut v: Vec<&MetricReport> = reports.iter().collect();
    v.sort_by(|a, b| {
        b.overall_average
            .srcc
            .partial_cmp(&a.overall_average.srcc)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.method_name.cmp(&b.method_name))
    });
    v
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

/// Renders reports; rows are ordered by descending overall SRCC.
pub fn emit_report(reports: &[MetricReport], format: ReportFormat) -> String {
    let rows = ranked(reports);
    match format {
        ReportFormat::Delimited => delimited(&rows),
        ReportFormat::Table => table(&rows),
    }
}

fn rank_label(i: usize) -> &'static str {
    match i {
        0 => "best",
        1 => "second",
        _ => "",
    }
}

fn delimited(rows: &[&MetricReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            rank_label(i).to_string(),
            r.method_name.clone(),
            r.plcc_mapping.as_str().to_string(),
            r.n_trials.to_string(),
        ];
        rec.extend(columns(r).iter().map(|&v| fmt4(v)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn table(rows: &[&MetricReport]) -> String {
    let values: Vec<[f64; 12]> = rows.iter().map(|r| columns(r)).collect();
    // per-column best / second-best on the printed (rounded) values
    let mut marks = vec![[' '; 12]; rows.len()];
    for c in 0..12 {
        let mut distinct: Vec<String> = values.iter().map(|v| fmt4(v[c])).collect();
        distinct.sort_by(|a, b| b.parse::<f64>().unwrap().total_cmp(&a.parse::<f64>().unwrap()));
        distinct.dedup();
        for (r, v) in values.iter().enumerate() {
            let s = fmt4(v[c]);
            if distinct.first() == Some(&s) {
                marks[r][c] = '*';
            } else if distinct.get(1) == Some(&s) {
                marks[r][c] = '+';
            }
        }
    }

    let name_w = rows.iter().map(|r| r.method_name.len()).max().unwrap_or(0).max(6);
    let cell_w = 8;
    let group_w = 3 * (cell_w + 1) - 1;
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Method");
    for g in Dimension::ALL.iter().map(|d| d.title()).chain(["Overall Average"]) {
        let _ = write!(out, " | {g:<group_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "");
    for _ in 0..4 {
        let _ = write!(out, " | {:<cell_w$} {:<cell_w$} {:<cell_w$}", "SRCC", "PLCC", "KRCC");
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + 4 * (group_w + 3)));
    out.push('\n');
    for (r, report) in rows.iter().enumerate() {
        let _ = write!(out, "{:<name_w$}", report.method_name);
        for g in 0..4 {
            out.push_str(" |");
            for k in 0..3 {
                let c = 3 * g + k;
                let cell = format!("{}{}", fmt4(values[r][c]), marks[r][c]);
                let _ = write!(out, " {cell:<cell_w$}");
            }
        }
        out.push('\n');
    }
    let mapping = rows.first().map_or("linear", |r| r.plcc_mapping.as_str());
    let trials = rows.first().map_or(0, |r| r.n_trials);
    let _ = writeln!(
        out,
        "* best, + second best per column; averaged over {trials} trial(s); PLCC mapping: {mapping}"
    );
    out
}

/// Parses the output of [`emit_report`] with [`ReportFormat::Delimited`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| e.to_string())?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err("unexpected report header".into());
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let mut values = [0.0; 12];
        for (k, v) in values.iter_mut().enumerate() {
            *v = row[4 + k].parse().map_err(|_| format!("bad value `{}`", &row[4 + k]))?;
        }
        out.push(ReportRow {
            rank: row[0].to_string(),
            method: row[1].to_string(),
            plcc_mapping: row[2].to_string(),
            n_trials: row[3].parse().map_err(|_| format!("bad n_trials `{}`", &row[3]))?,
            values,
        });
    }
    Ok(out)
}
