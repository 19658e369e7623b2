//! Dataset directory: `index.json` plus `flights/`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufc_core::data::{build_datasets, Dataset, DatasetBundle, DatasetRole, Normalization};
use ufc_core::sim::{Domain, FlightLog, FlightRole, ScenarioConfig};
use ufc_core::Label;

use super::flight::{read_flight, write_flight};
use super::{read_json, write_json};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "ufc-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightEntry {
    pub id: u32,
    pub label: Label,
    pub domain: Domain,
    pub role: FlightRole,
    /// Relative to the dataset directory.
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format: String,
    /// L
    pub window: usize,
    pub stride: usize,
    /// Fitted on the source training windows.
    pub normalization: Normalization,
    pub scenario: ScenarioConfig,
    pub flights: Vec<FlightEntry>,
}

/// An index with its flights read back.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dir: PathBuf,
    pub index: DatasetIndex,
    pub logs: Vec<FlightLog>,
}

impl LoadedDataset {
    pub fn logs(&self, domain: Domain, role: FlightRole) -> Vec<&FlightLog> {
        self.logs
            .iter()
            .filter(|l| l.domain == domain && l.role == role)
            .collect()
    }

    pub fn flight(&self, id: u32) -> Option<&FlightLog> {
        self.logs.iter().find(|l| l.id == id)
    }

    /// Datasets A, B, D and E. Fails if the refitted normalization is not
    /// bit-identical to the stored one.
    pub fn bundle(&self) -> Result<DatasetBundle> {
        let source = self.logs(Domain::Source, FlightRole::Training);
        let target = self.logs(Domain::Target, FlightRole::Calibration);
        let bundle = build_datasets(&source, &target, self.index.window, self.index.stride)?;
        if *bundle.normalization() != self.index.normalization {
            return Err(Error::format(
                &self.dir.join("index.json"),
                "stored normalization does not match the source training flights",
            ));
        }
        Ok(bundle)
    }

    /// Held-out samples of one domain, normalized with the stored statistics.
    pub fn evaluation(&self, domain: Domain) -> Dataset {
        Dataset::from_logs(
            &self.logs(domain, FlightRole::Evaluation),
            self.index.window,
            self.index.stride,
            &self.index.normalization,
            DatasetRole::Evaluation,
        )
    }
}

/// Writes every flight and the index. The normalization is fitted here.
pub fn write_dataset(
    dir: &Path,
    scenario: &ScenarioConfig,
    logs: &[FlightLog],
    window: usize,
    stride: usize,
) -> Result<DatasetIndex> {
    let source: Vec<_> = logs
        .iter()
        .filter(|l| l.domain == Domain::Source && l.role == FlightRole::Training)
        .collect();
    let target: Vec<_> = logs
        .iter()
        .filter(|l| l.domain == Domain::Target && l.role == FlightRole::Calibration)
        .collect();
    let bundle = build_datasets(&source, &target, window, stride)?;

    let flights_dir = dir.join("flights");
    let mut flights = Vec::with_capacity(logs.len());
    for log in logs {
        let manifest = write_flight(&flights_dir, log)?;
        let name = manifest
            .file_name()
            .expect("flight manifest has a file name");
        flights.push(FlightEntry {
            id: log.id,
            label: log.label,
            domain: log.domain,
            role: log.role,
            manifest: format!("flights/{}", name.to_string_lossy()),
        });
    }
    let index = DatasetIndex {
        format: DATASET_FORMAT.into(),
        window,
        stride,
        normalization: bundle.normalization().clone(),
        scenario: scenario.clone(),
        flights,
    };
    write_json(&dir.join("index.json"), &index)?;
    Ok(index)
}

pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let index_path = dir.join("index.json");
    let index: DatasetIndex = read_json(&index_path, DATASET_FORMAT)?;
    let mut logs = Vec::with_capacity(index.flights.len());
    for entry in &index.flights {
        let log = read_flight(&dir.join(&entry.manifest))?;
        if log.id != entry.id
            || log.label != entry.label
            || log.domain != entry.domain
            || log.role != entry.role
        {
            return Err(Error::format(
                &index_path,
                format!("entry for flight {} disagrees with its manifest", entry.id),
            ));
        }
        logs.push(log);
    }
    Ok(LoadedDataset {
        dir: dir.to_path_buf(),
        index,
        logs,
    })
}
