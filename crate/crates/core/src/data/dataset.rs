use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{window_flight, Sample, INPUT_ROWS};
use crate::sim::FlightLog;
use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetRole {
    /// Source training samples, all labels.
    A,
    /// Target all-healthy samples.
    B,
    /// All-healthy subset of A.
    D,
    /// Copy of B.
    E,
    /// Held-out samples used only for testing.
    Evaluation,
}

/// Per-row z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; INPUT_ROWS],
    pub std: [f64; INPUT_ROWS],
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; INPUT_ROWS],
            std: [1.0; INPUT_ROWS],
        }
    }

    /// Mean and population standard deviation of each row over every column
    /// of every sample. Constant rows get a standard deviation of one.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let count: usize = samples.iter().map(|s| s.columns).sum();
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = count as f64;
        let mut mean = [0.0; INPUT_ROWS];
        for s in samples {
            for (r, m) in mean.iter_mut().enumerate() {
                *m += s.row(r).iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; INPUT_ROWS];
        for s in samples {
            for (r, v) in var.iter_mut().enumerate() {
                *v += s
                    .row(r)
                    .iter()
                    .map(|x| (x - mean[r]) * (x - mean[r]))
                    .sum::<f64>();
            }
        }
        let std = var.map(|v| {
            let sd = libm::sqrt(v / n);
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        });
        Ok(Self { mean, std })
    }

    pub fn apply(&self, sample: &mut Sample) {
        let c = sample.columns;
        for (r, chunk) in sample.matrix.chunks_mut(c).enumerate() {
            chunk
                .iter_mut()
                .for_each(|x| *x = (*x - self.mean[r]) / self.std[r]);
        }
    }

    pub fn invert(&self, sample: &mut Sample) {
        let c = sample.columns;
        for (r, chunk) in sample.matrix.chunks_mut(c).enumerate() {
            chunk
                .iter_mut()
                .for_each(|x| *x = *x * self.std[r] + self.mean[r]);
        }
    }
}

/// Normalized samples with the statistics they were normalized by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub role: DatasetRole,
    pub samples: Vec<Sample>,
    pub normalization: Normalization,
}

impl Dataset {
    /// Windows and normalizes every log.
    pub fn from_logs(
        logs: &[&FlightLog],
        window: usize,
        stride: usize,
        normalization: &Normalization,
        role: DatasetRole,
    ) -> Self {
        let mut samples: Vec<Sample> = logs
            .iter()
            .flat_map(|log| window_flight(log, window, stride))
            .collect();
        samples.iter_mut().for_each(|s| normalization.apply(s));
        Self {
            role,
            samples,
            normalization: normalization.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples per label, indexed by class.
    pub fn class_counts(&self) -> [usize; crate::NUM_CLASSES] {
        let mut counts = [0; crate::NUM_CLASSES];
        self.samples
            .iter()
            .for_each(|s| counts[s.label.index()] += 1);
        counts
    }
}

/// The four training datasets, normalized with statistics fitted on A.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub a: Dataset,
    pub b: Dataset,
    pub d: Dataset,
    pub e: Dataset,
}

impl DatasetBundle {
    pub fn normalization(&self) -> &Normalization {
        &self.a.normalization
    }
}

/// Builds datasets A, B, D and E from source training flights and
/// all-healthy target flights.
pub fn build_datasets(
    source: &[&FlightLog],
    target_healthy: &[&FlightLog],
    window: usize,
    stride: usize,
) -> Result<DatasetBundle> {
    if let Some(log) = target_healthy.iter().find(|l| !l.label.is_healthy()) {
        return Err(Error::Dataset(format!(
            "target flight {} is labelled {}; only all-healthy target flights may be used for training",
            log.id, log.label
        )));
    }
    let raw: Vec<Sample> = source
        .iter()
        .flat_map(|log| window_flight(log, window, stride))
        .collect();
    let mut present = [false; crate::NUM_CLASSES];
    raw.iter().for_each(|s| present[s.label.index()] = true);
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Dataset(format!(
            "source samples contain no label {}; all five categories are required",
            missing + 1
        )));
    }
    let normalization = Normalization::fit(&raw)?;

    let mut a_samples = raw;
    a_samples.iter_mut().for_each(|s| normalization.apply(s));
    let d_samples: Vec<Sample> = a_samples
        .iter()
        .filter(|s| s.label.is_healthy())
        .cloned()
        .collect();
    let b = Dataset::from_logs(
        target_healthy,
        window,
        stride,
        &normalization,
        DatasetRole::B,
    );
    if b.is_empty() {
        return Err(Error::Dataset(
            "target all-healthy flights produced no samples".into(),
        ));
    }
    let mut e = b.clone();
    e.role = DatasetRole::E;

    Ok(DatasetBundle {
        a: Dataset {
            role: DatasetRole::A,
            samples: a_samples,
            normalization: normalization.clone(),
        },
        b,
        d: Dataset {
            role: DatasetRole::D,
            samples: d_samples,
            normalization,
        },
        e,
    })
}
