use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FaultConfig, WindParams};
use crate::Label;

/// Column names of the logged signals, in input-matrix row order.
pub const SIGNAL_NAMES: [&str; 7] = ["pdot", "qdot", "rdot", "w1sq", "w2sq", "w3sq", "w4sq"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Simulation.
    Source,
    /// Real (or pseudo-real) flight.
    Target,
}

/// What a flight is used for downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlightRole {
    Training,
    /// All-healthy target flight used for domain adaptation and threshold
    /// calibration.
    Calibration,
    Evaluation,
}

/// One logged time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub time: f64,
    /// (p-dot, q-dot, r-dot), rad/s^2
    pub angular_acceleration: [f64; 3],
    /// Squared rotor speeds, (rad/s)^2
    pub rotor_speed_sq: [f64; 4],
}

impl LogRow {
    /// The seven signals in input-matrix row order.
    pub fn signals(&self) -> [f64; 7] {
        let a = &self.angular_acceleration;
        let w = &self.rotor_speed_sq;
        [a[0], a[1], a[2], w[0], w[1], w[2], w[3]]
    }
}

/// Uniformly sampled record of one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub id: u32,
    /// Sample spacing, s.
    pub dt: f64,
    pub rows: Vec<LogRow>,
    /// World position at each row, m.
    pub positions: Vec<[f64; 3]>,
    pub label: Label,
    pub domain: Domain,
    pub role: FlightRole,
    pub waypoints: Vec<[f64; 3]>,
    pub seed: u64,
    pub wind: WindParams,
    pub fault: FaultConfig,
    pub warnings: Vec<String>,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
