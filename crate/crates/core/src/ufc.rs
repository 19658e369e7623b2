//! Entropy-thresholded accept/reject rule, its calibration and the
//! accuracy and data-usage metrics.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{window_flight, Sample, SampleOrigin};
use crate::ensemble::{combine_member_logits, Ensemble, EnsemblePrediction};
use crate::sim::FlightLog;
use crate::{Error, Label, Result, NUM_CLASSES};

/// Threshold that accepts every prediction.
pub const ACCEPT_ALL: f64 = f64::INFINITY;

/// `{0.05, 0.10, ..., 1.60}`.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=32).map(|k| k as f64 * 0.05).collect()
}

/// Infinite thresholds are stored as `null`.
pub mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        (if t.is_finite() { Some(*t) } else { None }).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(super::ACCEPT_ALL))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "outcome", content = "label")]
pub enum Outcome {
    Accepted(Label),
    Rejected,
}

impl Outcome {
    pub fn is_accepted(self) -> bool {
        matches!(self, Outcome::Accepted(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    /// Ensemble label, whether or not it was accepted.
    pub predicted: Label,
    pub entropy: f64,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub origin: Option<SampleOrigin>,
}

/// Accepts the ensemble label iff its entropy is strictly below `threshold`.
pub fn decide(prediction: &EnsemblePrediction, threshold: f64) -> Decision {
    let outcome = if prediction.entropy < threshold {
        Outcome::Accepted(prediction.label)
    } else {
        Outcome::Rejected
    };
    Decision {
        outcome,
        predicted: prediction.label,
        entropy: prediction.entropy,
        threshold,
        origin: None,
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "threshold {t} must be non-negative"
        )));
    }
    Ok(())
}

/// Correct over accepted counts, compared exactly; no acceptances counts
/// as 100%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedAccuracy {
    pub correct: u64,
    pub accepted: u64,
}

impl AcceptedAccuracy {
    pub fn value(self) -> f64 {
        if self.accepted == 0 {
            1.0
        } else {
            self.correct as f64 / self.accepted as f64
        }
    }

    fn ratio(self) -> (u128, u128) {
        if self.accepted == 0 {
            (1, 1)
        } else {
            (self.correct as u128, self.accepted as u128)
        }
    }

    pub fn exact_cmp(self, other: Self) -> core::cmp::Ordering {
        let (a, b) = self.ratio();
        let (c, d) = other.ratio();
        (a * d).cmp(&(c * b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub accuracy: f64,
    /// `(tau, accuracy at tau)` in grid order.
    pub curve: Vec<(f64, AcceptedAccuracy)>,
}

/// Largest grid threshold whose accepted accuracy on all-healthy data is
/// maximal. A prediction counts as correct when it says healthy.
pub fn calibrate_threshold(
    predictions: &[EnsemblePrediction],
    labels: &[Label],
    grid: &[f64],
) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if predictions.len() != labels.len() {
        return Err(Error::Dataset(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| !l.is_healthy()) {
        return Err(Error::CalibrationLabel(bad.get()));
    }
    for &t in grid {
        check_threshold(t)?;
    }
    let curve: Vec<_> = grid
        .iter()
        .map(|&tau| {
            let mut acc = AcceptedAccuracy {
                correct: 0,
                accepted: 0,
            };
            for p in predictions.iter().filter(|p| p.entropy < tau) {
                acc.accepted += 1;
                acc.correct += u64::from(p.label.is_healthy());
            }
            (tau, acc)
        })
        .collect();
    let (threshold, best) = curve
        .iter()
        .copied()
        .reduce(|(t0, a0), (t1, a1)| match a1.exact_cmp(a0) {
            core::cmp::Ordering::Greater => (t1, a1),
            core::cmp::Ordering::Equal if t1 > t0 => (t1, a1),
            _ => (t0, a0),
        })
        .expect("non-empty grid");
    Ok(Calibration {
        threshold,
        accuracy: best.value(),
        curve,
    })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_totals(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    /// Entrywise sum.
    pub fn plus(&self, other: &Self) -> Self {
        let mut out = *self;
        for (r, o) in out.counts.iter_mut().zip(&other.counts) {
            r.iter_mut().zip(o).for_each(|(a, b)| *a += b);
        }
        out
    }
}

/// Metrics of one threshold applied to a labelled prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfcReport {
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    /// Accuracy over accepted predictions; 1 when none are accepted.
    pub accuracy: f64,
    /// Accuracy of the ensemble label over every sample.
    pub unfiltered_accuracy: f64,
    pub total: u64,
    pub accepted: u64,
    pub correct_accepted: u64,
    pub class_totals: [u64; NUM_CLASSES],
    pub class_accepted: [u64; NUM_CLASSES],
    /// Accepted fraction per true class; `None` for classes absent from
    /// the data.
    pub data_usage: [Option<f64>; NUM_CLASSES],
    /// Mean data usage over the fault classes present. The healthy class
    /// is left out.
    pub mean_fault_usage: Option<f64>,
    pub accepted_matrix: ConfusionMatrix,
    pub rejected_matrix: ConfusionMatrix,
    pub unfiltered_matrix: ConfusionMatrix,
}

pub fn report_from_predictions(
    predictions: &[EnsemblePrediction],
    labels: &[Label],
    threshold: f64,
) -> Result<UfcReport> {
    check_threshold(threshold)?;
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if predictions.len() != labels.len() {
        return Err(Error::Dataset(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut accepted = ConfusionMatrix::default();
    let mut rejected = ConfusionMatrix::default();
    for (p, &truth) in predictions.iter().zip(labels) {
        match decide(p, threshold).outcome {
            Outcome::Accepted(l) => accepted.record(truth, l),
            Outcome::Rejected => rejected.record(truth, p.label),
        }
    }
    let unfiltered = accepted.plus(&rejected);
    let class_totals = unfiltered.row_totals();
    let class_accepted = accepted.row_totals();
    let data_usage: [Option<f64>; NUM_CLASSES] = core::array::from_fn(|c| {
        (class_totals[c] > 0).then(|| class_accepted[c] as f64 / class_totals[c] as f64)
    });
    let fault_usage: Vec<f64> = data_usage[1..].iter().flatten().copied().collect();
    let mean_fault_usage = (!fault_usage.is_empty())
        .then(|| fault_usage.iter().sum::<f64>() / fault_usage.len() as f64);
    let acc = AcceptedAccuracy {
        correct: accepted.correct(),
        accepted: accepted.total(),
    };
    Ok(UfcReport {
        threshold,
        accuracy: acc.value(),
        unfiltered_accuracy: unfiltered.correct() as f64 / unfiltered.total() as f64,
        total: unfiltered.total(),
        accepted: acc.accepted,
        correct_accepted: acc.correct,
        class_totals,
        class_accepted,
        data_usage,
        mean_fault_usage,
        accepted_matrix: accepted,
        rejected_matrix: rejected,
        unfiltered_matrix: unfiltered,
    })
}

/// Predicts every sample with the ensemble and reports at `threshold`.
pub fn evaluate(ensemble: &Ensemble, samples: &[&Sample], threshold: f64) -> Result<UfcReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predictions = ensemble.predict_batch(samples)?;
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    report_from_predictions(&predictions, &labels, threshold)
}

/// One `(member count, threshold)` entry of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub members: usize,
    #[serde(with = "threshold_serde")]
    pub threshold: f64,
    pub accuracy: f64,
    pub accepted: u64,
    pub total: u64,
    pub mean_fault_usage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub member_counts: Vec<usize>,
    #[serde(with = "threshold_list_serde")]
    pub thresholds: Vec<f64>,
    /// Row-major over `member_counts` then `thresholds`.
    pub cells: Vec<SweepCell>,
}

mod threshold_list_serde {
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ts: &[f64], s: S) -> Result<S::Ok, S::Error> {
        ts.iter()
            .map(|t| t.is_finite().then_some(*t))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|t| t.unwrap_or(super::ACCEPT_ALL))
            .collect())
    }
}

impl SweepTable {
    pub fn cell(&self, members: usize, threshold: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.members == members && c.threshold.to_bits() == threshold.to_bits())
    }
}

/// Sweep from logits already computed for a member pool, laid out
/// `[member][sample]`. Row `n` uses the first `n` members.
pub fn sweep_from_logits(
    pool_logits: &[Vec<[f64; NUM_CLASSES]>],
    labels: &[Label],
    member_counts: &[usize],
    thresholds: &[f64],
) -> Result<SweepTable> {
    if member_counts.is_empty() || thresholds.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut cells = Vec::with_capacity(member_counts.len() * thresholds.len());
    for &n in member_counts {
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if n > pool_logits.len() {
            return Err(Error::PoolTooSmall {
                requested: n,
                available: pool_logits.len(),
            });
        }
        let predictions = combine_member_logits(&pool_logits[..n])?;
        for &t in thresholds {
            let r = report_from_predictions(&predictions, labels, t)?;
            cells.push(SweepCell {
                members: n,
                threshold: t,
                accuracy: r.accuracy,
                accepted: r.accepted,
                total: r.total,
                mean_fault_usage: r.mean_fault_usage,
            });
        }
    }
    Ok(SweepTable {
        member_counts: member_counts.to_vec(),
        thresholds: thresholds.to_vec(),
        cells,
    })
}

/// Accuracy and usage over a grid of member counts and thresholds.
pub fn sweep(
    pool: &Ensemble,
    samples: &[&Sample],
    member_counts: &[usize],
    thresholds: &[f64],
) -> Result<SweepTable> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let needed = member_counts.iter().copied().max().unwrap_or(0);
    if needed > pool.len() {
        return Err(Error::PoolTooSmall {
            requested: needed,
            available: pool.len(),
        });
    }
    let logits = pool.truncated(needed.max(1))?.member_logits(samples)?;
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    sweep_from_logits(&logits, &labels, member_counts, thresholds)
}

/// One time step of a diagnosed flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub position: [f64; 3],
    pub predicted: Label,
    pub entropy: f64,
    pub decision: Outcome,
}

/// Windows ending at every log row from `window` on, normalized with the
/// ensemble's statistics.
pub fn trace_windows(ensemble: &Ensemble, log: &FlightLog, window: usize) -> Result<Vec<Sample>> {
    if log.len() < window + 1 {
        return Err(Error::Dataset(format!(
            "flight {} has {} rows, a window of {window} needs at least {}",
            log.id,
            log.len(),
            window + 1
        )));
    }
    let mut samples = window_flight(log, window, 1);
    samples
        .iter_mut()
        .for_each(|s| ensemble.normalization().apply(s));
    Ok(samples)
}

/// Assembles trace rows from predictions on [`trace_windows`].
pub fn trace_from_predictions(
    log: &FlightLog,
    window: usize,
    predictions: &[EnsemblePrediction],
    threshold: f64,
) -> Result<Vec<TraceRow>> {
    check_threshold(threshold)?;
    predictions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let row = window + k;
            let position = *log.positions.get(row).ok_or_else(|| {
                Error::Dataset(format!("flight {} has no position for row {row}", log.id))
            })?;
            Ok(TraceRow {
                time: log.rows[row].time,
                position,
                predicted: p.label,
                entropy: p.entropy,
                decision: decide(p, threshold).outcome,
            })
        })
        .collect()
}

/// Diagnosis at every time step of a flight, `rows - window` entries.
pub fn trace_flight(
    ensemble: &Ensemble,
    log: &FlightLog,
    window: usize,
    threshold: f64,
) -> Result<Vec<TraceRow>> {
    let samples = trace_windows(ensemble, log, window)?;
    let refs: Vec<_> = samples.iter().collect();
    let predictions = ensemble.predict_batch(&refs)?;
    trace_from_predictions(log, window, &predictions, threshold)
}
