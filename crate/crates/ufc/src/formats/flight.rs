//! One flight is three files: the signal CSV, a position CSV used by traces,
//! and a JSON manifest holding everything else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufc_core::sim::{Domain, FaultConfig, FlightLog, FlightRole, LogRow, WindParams};
use ufc_core::Label;

use super::{float_field, parse_float, read_json, write_json};
use crate::error::{Error, Result};

pub const FLIGHT_FORMAT: &str = "ufc-flight/1";
pub const SIGNAL_HEADER: [&str; 8] = [
    "time", "pdot", "qdot", "rdot", "w1sq", "w2sq", "w3sq", "w4sq",
];
pub const POSITION_HEADER: [&str; 4] = ["time", "x", "y", "z"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightManifest {
    pub format: String,
    pub id: u32,
    pub label: Label,
    pub domain: Domain,
    pub role: FlightRole,
    /// s
    pub dt: f64,
    pub rows: usize,
    pub seed: u64,
    pub wind: WindParams,
    pub fault: FaultConfig,
    pub waypoints: Vec<[f64; 3]>,
    pub warnings: Vec<String>,
    /// File names relative to the manifest.
    pub signals: String,
    pub positions: String,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        super::create_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Reads a CSV with exactly the expected header into rows of numbers.
fn read_numeric_csv<const N: usize>(path: &Path, header: &[&str; N]) -> Result<Vec<[f64; N]>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::format(
            path,
            format!(
                "header is {:?}, expected {:?}",
                found.iter().collect::<Vec<_>>(),
                header
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != N {
            return Err(Error::format(
                path,
                format!("line {line} has {} fields, expected {N}", record.len()),
            ));
        }
        let mut row = [0.0; N];
        for (k, (value, name)) in record.iter().zip(header).enumerate() {
            row[k] = parse_float(path, line, name, value)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_signals_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SIGNAL_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        let fields = std::iter::once(row.time)
            .chain(row.signals())
            .map(float_field);
        w.write_record(fields).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_signals_csv(path: &Path) -> Result<Vec<LogRow>> {
    Ok(read_numeric_csv(path, &SIGNAL_HEADER)?
        .into_iter()
        .map(|[time, pd, qd, rd, w1, w2, w3, w4]| LogRow {
            time,
            angular_acceleration: [pd, qd, rd],
            rotor_speed_sq: [w1, w2, w3, w4],
        })
        .collect())
}

pub fn write_positions_csv(path: &Path, times: &[f64], positions: &[[f64; 3]]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(POSITION_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (t, p) in times.iter().zip(positions) {
        let fields = [*t, p[0], p[1], p[2]].map(float_field);
        w.write_record(fields).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(time, position)` per row.
pub fn read_positions_csv(path: &Path) -> Result<Vec<(f64, [f64; 3])>> {
    Ok(read_numeric_csv(path, &POSITION_HEADER)?
        .into_iter()
        .map(|[t, x, y, z]| (t, [x, y, z]))
        .collect())
}

/// Writes `flight_<id>.json`, `.csv` and `_position.csv` into `dir` and
/// returns the manifest path.
pub fn write_flight(dir: &Path, log: &FlightLog) -> Result<PathBuf> {
    let stem = format!("flight_{:04}", log.id);
    let manifest = FlightManifest {
        format: FLIGHT_FORMAT.into(),
        id: log.id,
        label: log.label,
        domain: log.domain,
        role: log.role,
        dt: log.dt,
        rows: log.rows.len(),
        seed: log.seed,
        wind: log.wind.clone(),
        fault: log.fault,
        waypoints: log.waypoints.clone(),
        warnings: log.warnings.clone(),
        signals: format!("{stem}.csv"),
        positions: format!("{stem}_position.csv"),
    };
    write_signals_csv(&dir.join(&manifest.signals), &log.rows)?;
    let times: Vec<f64> = log.rows.iter().map(|r| r.time).collect();
    write_positions_csv(&dir.join(&manifest.positions), &times, &log.positions)?;
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_flight(manifest_path: &Path) -> Result<FlightLog> {
    let m: FlightManifest = read_json(manifest_path, FLIGHT_FORMAT)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let signals_path = dir.join(&m.signals);
    let rows = read_signals_csv(&signals_path)?;
    if rows.len() != m.rows {
        return Err(Error::format(
            &signals_path,
            format!("{} rows, manifest says {}", rows.len(), m.rows),
        ));
    }
    if rows
        .iter()
        .any(|r| r.rotor_speed_sq.iter().any(|w| *w < 0.0))
    {
        return Err(Error::format(&signals_path, "negative squared rotor speed"));
    }
    if rows
        .windows(2)
        .any(|w| w[1].time.partial_cmp(&w[0].time) != Some(core::cmp::Ordering::Greater))
    {
        return Err(Error::format(
            &signals_path,
            "time is not strictly increasing",
        ));
    }
    let positions_path = dir.join(&m.positions);
    let positions = read_positions_csv(&positions_path)?;
    if positions.len() != rows.len()
        || positions
            .iter()
            .zip(&rows)
            .any(|((t, _), r)| t.to_bits() != r.time.to_bits())
    {
        return Err(Error::format(
            &positions_path,
            "rows do not match the signal file",
        ));
    }
    Ok(FlightLog {
        id: m.id,
        dt: m.dt,
        rows,
        positions: positions.into_iter().map(|(_, p)| p).collect(),
        label: m.label,
        domain: m.domain,
        role: m.role,
        waypoints: m.waypoints,
        seed: m.seed,
        wind: m.wind,
        fault: m.fault,
        warnings: m.warnings,
    })
}
