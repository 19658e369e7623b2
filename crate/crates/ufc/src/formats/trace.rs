use std::path::Path;

use ufc_core::ufc::{Outcome, TraceRow};
use ufc_core::Label;

use super::flight::csv_error;
use super::{float_field, parse_float};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 7] = ["time", "x", "y", "z", "pred_label", "entropy", "decision"];

const ACCEPT: &str = "accept";
const REJECT: &str = "reject";

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        super::create_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TRACE_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        let [x, y, z] = row.position.map(float_field);
        let decision = if row.decision.is_accepted() {
            ACCEPT
        } else {
            REJECT
        };
        w.write_record([
            float_field(row.time),
            x,
            y,
            z,
            row.predicted.to_string(),
            float_field(row.entropy),
            decision.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::format(path, "unexpected trace header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != TRACE_HEADER.len() {
            return Err(Error::format(
                path,
                format!("line {line}: wrong field count"),
            ));
        }
        let num = |k: usize| parse_float(path, line, TRACE_HEADER[k], &record[k]);
        let predicted = record[4]
            .parse::<u8>()
            .ok()
            .and_then(|v| Label::new(v).ok())
            .ok_or_else(|| {
                Error::format(path, format!("line {line}: bad label {:?}", &record[4]))
            })?;
        let decision = match &record[6] {
            ACCEPT => Outcome::Accepted(predicted),
            REJECT => Outcome::Rejected,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {line}: bad decision {other:?}"),
                ))
            }
        };
        rows.push(TraceRow {
            time: num(0)?,
            position: [num(1)?, num(2)?, num(3)?],
            predicted,
            entropy: num(5)?,
            decision,
        });
    }
    Ok(rows)
}
