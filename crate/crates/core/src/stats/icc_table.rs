use super::{IccResult, ReliabilityLevel};
use crate::Dimension;

/// Column headings of the reliability table; `{ci}` is the confidence label.
pub const ICC_COLUMNS: [&str; 7] = [
    "Evaluation Dimension",
    "ICC2",
    "{ci} CI (ICC2)",
    "ICC2k",
    "{ci} CI (ICC2k)",
    "ICC2 Level*",
    "MOS Reliability (ICC2k)",
];

fn headers(rows: &[(Dimension, IccResult)]) -> Vec<String> {
    let conf = rows.first().map_or(0.95, |(_, r)| r.confidence);
    let ci = format!("{}%", (conf * 100.0).round());
    ICC_COLUMNS.iter().map(|h| h.replace("{ci}", &ci)).collect()
}

fn cells(dim: Dimension, r: &IccResult) -> [String; 7] {
    [
        dim.title().to_string(),
        format!("{:.3}", r.icc_single),
        format!("({:.2}, {:.2})", r.ci_single.0, r.ci_single.1),
        format!("{:.3}", r.icc_average),
        format!("({:.2}, {:.2})", r.ci_average.0, r.ci_average.1),
        ReliabilityLevel::single_rater(r.icc_single).to_string(),
        ReliabilityLevel::mean_rating(r.icc_average).to_string(),
    ]
}

/// Aligned plain-text reliability table, one row per dimension.
pub fn icc_table(rows: &[(Dimension, IccResult)]) -> String {
    let head = headers(rows);
    let body: Vec<[String; 7]> = rows.iter().map(|(d, r)| cells(*d, r)).collect();
    let mut widths: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: &[String]| {
        let parts: Vec<String> = cols.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&head);
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
    for row in &body {
        out.push_str(&line(row));
    }
    out.push_str("* single-rater bands: <0.40 Poor, <0.60 Fair, <0.75 Good, else Excellent; ");
    out.push_str("mean-rating bands: <0.50 Poor, <0.75 Moderate, <0.90 Good, else Excellent\n");
    out
}

/// The same table as comma-separated text.
pub fn icc_csv(rows: &[(Dimension, IccResult)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers(rows)).expect("in-memory write");
    for (d, r) in rows {
        w.write_record(cells(*d, r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}
