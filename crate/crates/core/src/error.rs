use alloc::string::String;

use crate::data::DatasetRole;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("simulation diverged at step {step} (t = {time} s): non-finite {quantity}")]
    SimulationDiverged {
        step: usize,
        time: f64,
        quantity: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid label {0}: fault categories are 1 to 5")]
    InvalidLabel(u8),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(
        "batch size {batch} exceeds dataset {role:?} ({available} samples); \
         lower the batch size or raise the target flight count"
    )]
    BatchTooLarge {
        role: DatasetRole,
        batch: usize,
        available: usize,
    },

    #[error("shape mismatch in {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: &'static str,
        expected: String,
        actual: String,
    },

    #[error("training diverged at step {step}: {reason}")]
    TrainingDiverged { step: usize, reason: String },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("incompatible model: {0}")]
    IncompatibleModel(String),

    #[error(
        "calibration set contains a sample labelled {0}; only all-healthy samples are allowed"
    )]
    CalibrationLabel(u8),

    #[error("threshold grid is empty")]
    EmptyGrid,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{requested} members requested from a pool of {available}")]
    PoolTooSmall { requested: usize, available: usize },
}

impl Error {
    /// True for failures caused by non-finite numbers during simulation or
    /// training, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SimulationDiverged { .. } | Error::TrainingDiverged { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
