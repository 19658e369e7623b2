//! Soft-voting deep ensemble and its predictive entropy.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Normalization, Sample};
use crate::nn::{Architecture, MemberModel};
use crate::{Error, Label, Result, NUM_CLASSES};

/// Tolerance on the total mass of a probability vector.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|z| libm::exp(z - max));
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Combined prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub probs: [f64; NUM_CLASSES],
    pub label: Label,
    /// Entropy of `probs`, in nats.
    pub entropy: f64,
    /// Softmax output of each member, in member order.
    pub member_probs: Vec<[f64; NUM_CLASSES]>,
}

/// Per-class mean of member distributions.
///
/// Each column is sorted before a running mean is taken, so the result does
/// not depend on member order at all, and repeating one member any number of
/// times reproduces it bit for bit.
pub fn mean_distribution(member_probs: &[[f64; NUM_CLASSES]]) -> Result<[f64; NUM_CLASSES]> {
    if member_probs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut mean = [0.0; NUM_CLASSES];
    let mut column = Vec::with_capacity(member_probs.len());
    for (c, m) in mean.iter_mut().enumerate() {
        column.clear();
        column.extend(member_probs.iter().map(|p| p[c]));
        column.sort_by(f64::total_cmp);
        for (k, v) in column.iter().enumerate() {
            *m += (v - *m) / (k + 1) as f64;
        }
    }
    Ok(mean)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(probs: &[f64; NUM_CLASSES]) -> Label {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    Label::from_index(best).expect("class index below NUM_CLASSES")
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn predictive_entropy(probs: &[f64; NUM_CLASSES]) -> Result<f64> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entries must be finite and non-negative: {probs:?}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {total}"
        )));
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * libm::log(p))
        .sum();
    Ok(h.max(0.0))
}

/// Softmax of every member's logits, then the mean distribution, its
/// argmax and its entropy.
pub fn soft_vote(member_logits: &[[f64; NUM_CLASSES]]) -> Result<EnsemblePrediction> {
    if member_logits.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if let Some(bad) = member_logits
        .iter()
        .position(|z| z.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidDistribution(format!(
            "member {bad} produced non-finite logits"
        )));
    }
    let member_probs: Vec<_> = member_logits.iter().map(softmax).collect();
    let probs = mean_distribution(&member_probs)?;
    Ok(EnsemblePrediction {
        label: argmax(&probs),
        entropy: predictive_entropy(&probs)?,
        probs,
        member_probs,
    })
}

/// Soft-votes per-member logits laid out `[member][sample]`.
pub fn combine_member_logits(
    per_member: &[Vec<[f64; NUM_CLASSES]>],
) -> Result<Vec<EnsemblePrediction>> {
    let first = per_member.first().ok_or(Error::EmptyEnsemble)?;
    if per_member.iter().any(|m| m.len() != first.len()) {
        return Err(Error::ShapeMismatch {
            layer: "ensemble",
            expected: format!("{} predictions per member", first.len()),
            actual: format!("{:?}", per_member.iter().map(Vec::len).collect::<Vec<_>>()),
        });
    }
    let mut scratch = Vec::with_capacity(per_member.len());
    (0..first.len())
        .map(|i| {
            scratch.clear();
            scratch.extend(per_member.iter().map(|m| m[i]));
            soft_vote(&scratch)
        })
        .collect()
}

/// An ordered, non-empty set of compatible members.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<MemberModel>,
}

impl Ensemble {
    /// Validates every member before accepting any of them.
    pub fn new(members: Vec<MemberModel>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        for (k, m) in members.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::IncompatibleModel(format!("member {k}: {e}")))?;
            if m.architecture != first.architecture {
                return Err(Error::IncompatibleModel(format!(
                    "member {k} architecture {:?} differs from member 0 {:?}",
                    m.architecture, first.architecture
                )));
            }
            if m.normalization != first.normalization {
                return Err(Error::IncompatibleModel(format!(
                    "member {k} was trained with different normalization statistics"
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[MemberModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn architecture(&self) -> &Architecture {
        &self.members[0].architecture
    }

    pub fn normalization(&self) -> &Normalization {
        &self.members[0].normalization
    }

    /// The first `n` members.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if n > self.members.len() {
            return Err(Error::PoolTooSmall {
                requested: n,
                available: self.members.len(),
            });
        }
        Ok(Self {
            members: self.members[..n].to_vec(),
        })
    }

    /// Copy whose members all difference against the mean feature of
    /// `healthy` instead of their stored reference.
    pub fn rebased_on(&self, healthy: &[&Sample]) -> Result<Self> {
        let mut members = self.members.clone();
        for m in &mut members {
            m.set_reference_from(healthy)?;
        }
        Ok(Self { members })
    }

    /// Logits laid out `[member][sample]`.
    pub fn member_logits(&self, samples: &[&Sample]) -> Result<Vec<Vec<[f64; NUM_CLASSES]>>> {
        self.members.iter().map(|m| m.logits(samples)).collect()
    }

    pub fn predict(&self, sample: &Sample) -> Result<EnsemblePrediction> {
        let logits: Vec<_> = self
            .members
            .iter()
            .map(|m| m.logits(&[sample]).map(|z| z[0]))
            .collect::<Result<_>>()?;
        soft_vote(&logits)
    }

    pub fn predict_batch(&self, samples: &[&Sample]) -> Result<Vec<EnsemblePrediction>> {
        combine_member_logits(&self.member_logits(samples)?)
    }
}
