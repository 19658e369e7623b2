use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ufc_core::sim::Domain;
use ufc_core::ufc::{ConfusionMatrix, SweepTable, UfcReport};
use ufc_core::NUM_CLASSES;

use super::{read_json, write_json, write_text};
use crate::error::Result;

pub const REPORT_FORMAT: &str = "ufc-report/1";
pub const SWEEP_FORMAT: &str = "ufc-sweep/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub domain: Domain,
    pub members: usize,
    pub report: UfcReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub format: String,
    pub domain: Domain,
    pub table: SweepTable,
}

fn threshold_text(t: f64) -> String {
    if t.is_finite() {
        format!("{t:.2}")
    } else {
        "none".into()
    }
}

fn percent(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn matrix_text(out: &mut String, title: &str, m: &ConfusionMatrix) {
    let _ = writeln!(out, "{title} (rows: true label, columns: predicted)");
    let _ = write!(out, "      ");
    for c in 1..=NUM_CLASSES {
        let _ = write!(out, "{c:>8}");
    }
    out.push('\n');
    for (r, row) in m.counts.iter().enumerate() {
        let _ = write!(out, "{:>6}", r + 1);
        for v in row {
            let _ = write!(out, "{v:>8}");
        }
        out.push('\n');
    }
}

pub fn report_table(file: &ReportFile) -> String {
    let r = &file.report;
    let mut out = String::new();
    let _ = writeln!(out, "domain               {:?}", file.domain);
    let _ = writeln!(out, "members              {}", file.members);
    let _ = writeln!(out, "threshold            {}", threshold_text(r.threshold));
    let _ = writeln!(out, "samples              {}", r.total);
    let _ = writeln!(out, "accepted             {}", r.accepted);
    let _ = writeln!(out, "accuracy (accepted)  {}", percent(r.accuracy));
    let _ = writeln!(
        out,
        "accuracy (all)       {}",
        percent(r.unfiltered_accuracy)
    );
    let _ = writeln!(
        out,
        "mean fault usage     {}",
        r.mean_fault_usage.map_or("-".into(), percent)
    );
    out.push('\n');
    let _ = writeln!(out, "label   samples  accepted   usage");
    for c in 0..NUM_CLASSES {
        let _ = writeln!(
            out,
            "{:>5} {:>9} {:>9} {:>7}",
            c + 1,
            r.class_totals[c],
            r.class_accepted[c],
            r.data_usage[c].map_or("-".into(), percent)
        );
    }
    out.push('\n');
    matrix_text(&mut out, "accepted", &r.accepted_matrix);
    out.push('\n');
    matrix_text(&mut out, "all samples", &r.unfiltered_matrix);
    out
}

/// Accuracy with mean fault usage in parentheses, one row per member count.
pub fn sweep_table(file: &SweepFile) -> String {
    let t = &file.table;
    let mut out = String::new();
    let _ = writeln!(out, "domain {:?}; accuracy (mean fault usage)", file.domain);
    let _ = write!(out, "{:>7}", "models");
    for &th in &t.thresholds {
        let _ = write!(out, "{:>16}", threshold_text(th));
    }
    out.push('\n');
    for &n in &t.member_counts {
        let _ = write!(out, "{n:>7}");
        for &th in &t.thresholds {
            let cell = t.cell(n, th).expect("sweep has every cell");
            let usage = cell.mean_fault_usage.map_or("-".into(), percent);
            let _ = write!(
                out,
                "{:>16}",
                format!("{} ({usage})", percent(cell.accuracy))
            );
        }
        out.push('\n');
    }
    out
}

/// `<stem>.json` and `<stem>.txt`.
pub fn write_report(stem: &Path, file: &ReportFile) -> Result<()> {
    write_json(&stem.with_extension("json"), file)?;
    write_text(&stem.with_extension("txt"), &report_table(file))
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    read_json(path, REPORT_FORMAT)
}

pub fn write_sweep(stem: &Path, file: &SweepFile) -> Result<()> {
    write_json(&stem.with_extension("json"), file)?;
    write_text(&stem.with_extension("txt"), &sweep_table(file))
}

pub fn read_sweep(path: &Path) -> Result<SweepFile> {
    read_json(path, SWEEP_FORMAT)
}
