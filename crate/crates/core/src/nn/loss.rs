use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{head, input_tensor, trunk, Dropout, ParamVars};
use super::tape::{Tape, Var};
use super::MemberModel;
use crate::data::{DatasetBundle, MinibatchIndices, Sample};
use crate::{Error, Result};

/// Components of the training objective `classification + lambda * DA`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub classification: f64,
    pub domain_adaptation: f64,
    pub lambda: f64,
}

/// Samples of one training step, one minibatch per dataset role.
#[derive(Debug, Clone)]
pub struct TrainingBatch<'a> {
    pub a: Vec<&'a Sample>,
    pub b: Vec<&'a Sample>,
    pub d: Vec<&'a Sample>,
    pub e: Vec<&'a Sample>,
}

impl<'a> TrainingBatch<'a> {
    pub fn gather(bundle: &'a DatasetBundle, indices: &MinibatchIndices) -> Self {
        let pick =
            |samples: &'a [Sample], idx: &[usize]| idx.iter().map(|&i| &samples[i]).collect();
        Self {
            a: pick(&bundle.a.samples, &indices.a),
            b: pick(&bundle.b.samples, &indices.b),
            d: pick(&bundle.d.samples, &indices.d),
            e: pick(&bundle.e.samples, &indices.e),
        }
    }
}

pub(crate) struct LossGraph {
    pub params: ParamVars,
    pub total: Var,
    pub classification: Var,
    pub domain_adaptation: Var,
    /// Batch mean of the source all-healthy features.
    pub reference: Var,
}

/// Records the objective on `tape`.
///
/// Features of the A, D and E batches come from the same trunk. The
/// classification term is the cross-entropy of A's logits, computed from
/// A's features minus the mean feature of the D batch. The domain-adaptation
/// term is the squared MMD between D and E features. The B batch is not
/// used: E is a copy of B and plays its role.
pub(crate) fn record_loss<R: Rng>(
    tape: &mut Tape,
    model: &MemberModel,
    batch: &TrainingBatch<'_>,
    lambda: f64,
    mut dropout: Option<&mut Dropout<'_, R>>,
) -> Result<LossGraph> {
    if batch.a.is_empty() || batch.d.is_empty() || batch.e.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let arch = &model.architecture;
    let params = ParamVars::register(tape, &model.parameters);
    let fa = trunk(
        tape,
        arch,
        &params,
        input_tensor(arch, &batch.a)?,
        dropout.as_deref_mut(),
    )?;
    let fd = trunk(
        tape,
        arch,
        &params,
        input_tensor(arch, &batch.d)?,
        dropout.as_deref_mut(),
    )?;
    let fe = trunk(tape, arch, &params, input_tensor(arch, &batch.e)?, dropout)?;
    let reference = tape.mean_rows(fd)?;
    let logits = head(tape, &params, fa, reference)?;
    let targets: Vec<usize> = batch.a.iter().map(|s| s.label.index()).collect();
    let classification = tape.softmax_cross_entropy(logits, &targets)?;
    let domain_adaptation = tape.mmd_squared(fd, fe)?;
    let total = tape.axpy(classification, domain_adaptation, lambda)?;
    Ok(LossGraph {
        params,
        total,
        classification,
        domain_adaptation,
        reference,
    })
}

pub(crate) fn breakdown(tape: &Tape, graph: &LossGraph, lambda: f64) -> LossBreakdown {
    let scalar = |v: Var| tape.value(v).data()[0];
    LossBreakdown {
        total: scalar(graph.total),
        classification: scalar(graph.classification),
        domain_adaptation: scalar(graph.domain_adaptation),
        lambda,
    }
}

/// Objective for one step's batches with dropout disabled.
pub fn loss(model: &MemberModel, batch: &TrainingBatch<'_>, lambda: f64) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let graph = record_loss::<rand_chacha::ChaCha8Rng>(&mut tape, model, batch, lambda, None)?;
    Ok(breakdown(&tape, &graph, lambda))
}
