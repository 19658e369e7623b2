use std::path::Path;

use serde::{Deserialize, Serialize};
use ufc_core::ufc::{threshold_serde, Calibration};

use super::{read_json, write_json};
use crate::error::Result;

pub const THRESHOLD_FORMAT: &str = "ufc-threshold/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub accepted: u64,
    pub correct: u64,
}

/// Calibrated threshold with the curve it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub format: String,
    /// `null` accepts everything.
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    /// Ensemble size the threshold was calibrated for.
    pub members: usize,
    pub calibration_samples: usize,
    /// Accepted accuracy on the calibration samples at `threshold`.
    pub accuracy: f64,
    pub curve: Vec<CurvePoint>,
}

impl ThresholdFile {
    pub fn new(calibration: &Calibration, members: usize, calibration_samples: usize) -> Self {
        Self {
            format: THRESHOLD_FORMAT.into(),
            threshold: calibration.threshold,
            members,
            calibration_samples,
            accuracy: calibration.accuracy,
            curve: calibration
                .curve
                .iter()
                .map(|(t, a)| CurvePoint {
                    threshold: *t,
                    accepted: a.accepted,
                    correct: a.correct,
                })
                .collect(),
        }
    }

    /// Accepts everything; used when no calibration is wanted.
    pub fn accept_all(members: usize) -> Self {
        Self {
            format: THRESHOLD_FORMAT.into(),
            threshold: ufc_core::ufc::ACCEPT_ALL,
            members,
            calibration_samples: 0,
            accuracy: 1.0,
            curve: Vec::new(),
        }
    }
}

pub fn write_threshold(path: &Path, file: &ThresholdFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_threshold(path: &Path) -> Result<ThresholdFile> {
    read_json(path, THRESHOLD_FORMAT)
}
