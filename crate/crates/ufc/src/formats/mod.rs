//! On-disk artifacts. JSON files carry a `format` tag that is checked before
//! the body is parsed; floats are written in shortest round-trip form and
//! read back bit-exactly.

mod dataset;
mod flight;
mod model;
mod report;
mod threshold;
mod trace;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    read_dataset, write_dataset, DatasetIndex, FlightEntry, LoadedDataset, DATASET_FORMAT,
};
pub use flight::{
    read_flight, read_positions_csv, read_signals_csv, write_flight, write_positions_csv,
    write_signals_csv, FlightManifest, FLIGHT_FORMAT, POSITION_HEADER, SIGNAL_HEADER,
};
pub use model::{
    read_ensemble, read_member, write_ensemble, write_member, EnsembleManifest, MemberEntry,
    ENSEMBLE_FORMAT, MODEL_FORMAT,
};
pub use report::{
    read_report, read_sweep, report_table, sweep_table, write_report, write_sweep, ReportFile,
    SweepFile, REPORT_FORMAT, SWEEP_FORMAT,
};
pub use threshold::{read_threshold, write_threshold, ThresholdFile, THRESHOLD_FORMAT};
pub use trace::{read_trace, write_trace, TRACE_HEADER};

/// Every format tag with its version, for `--version`.
pub fn format_versions() -> String {
    [
        FLIGHT_FORMAT,
        DATASET_FORMAT,
        MODEL_FORMAT,
        ENSEMBLE_FORMAT,
        THRESHOLD_FORMAT,
        REPORT_FORMAT,
        SWEEP_FORMAT,
    ]
    .join(", ")
}

#[derive(Deserialize)]
struct Tagged {
    format: String,
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, format!("cannot serialize: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads a JSON artifact after checking its format tag.
pub(crate) fn read_json<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tag: Tagged = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("not a tagged artifact: {e}")))?;
    if tag.format != format {
        return Err(Error::format(
            path,
            format!("format is {:?}, expected {format:?}", tag.format),
        ));
    }
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn float_field(value: f64) -> String {
    format!("{value:?}")
}

pub(crate) fn parse_float(path: &Path, line: u64, column: &str, text: &str) -> Result<f64> {
    text.trim().parse().map_err(|_| {
        Error::format(
            path,
            format!("line {line}, column {column}: {text:?} is not a number"),
        )
    })
}
