use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{breakdown, record_loss, LossBreakdown, TrainingBatch};
use super::model::Dropout;
use super::tape::Tape;
use super::{Architecture, MemberModel};
use crate::data::{DatasetBundle, MinibatchSampler};
use crate::{Error, Result};

/// Optimizer and objective settings for one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    /// Weight of the domain-adaptation term.
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Update weight of the running all-healthy reference during training.
    pub reference_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 128,
            epochs: 10,
            dropout: 0.1,
            lambda: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            reference_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("training {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0)
        {
            return bad("Adam moments must lie in [0, 1) with positive epsilon");
        }
        if !(0.0..=1.0).contains(&self.reference_momentum) {
            return bad("reference momentum must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(parameters: usize, config: &TrainConfig) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            m: alloc::vec![0.0; parameters],
            v: alloc::vec![0.0; parameters],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
    }
}

/// Mean loss components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub model: MemberModel,
    pub history: Vec<EpochSummary>,
}

/// Seeds derived from a member seed, one per source of randomness.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains one member with Adam on the combined objective.
///
/// Each step draws one minibatch from every dataset and descends the
/// gradient of the loss. During training the member's reference vector is a
/// running mean of the D-batch feature means; after the last epoch it is
/// replaced by the mean feature of dataset B, the target all-healthy data.
/// Initialization, dropout masks and batch order all derive from `seed`.
pub fn train_member(
    bundle: &DatasetBundle,
    architecture: &Architecture,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedMember> {
    config.validate()?;
    let mut model = MemberModel::init(
        architecture.clone(),
        config.clone(),
        seed,
        &mut stream(seed, 0),
    )?;
    model.normalization = bundle.normalization().clone();
    let mut dropout_rng = stream(seed, 1);
    let mut sampler =
        MinibatchSampler::new(bundle, config.batch_size, seed ^ 0x5eed_0000_b47c_0000)?;
    let steps = sampler.steps_per_epoch();
    let mut adam = Adam::new(model.parameters.len(), config);
    let mut flat = model.parameters.to_flat();
    let mut history = Vec::with_capacity(config.epochs);
    let mut reference_initialized = false;
    let mut global_step = 0usize;

    for epoch in 1..=config.epochs {
        let mut sum = LossBreakdown {
            total: 0.0,
            classification: 0.0,
            domain_adaptation: 0.0,
            lambda: config.lambda,
        };
        for _ in 0..steps {
            let indices = sampler.next_batch();
            let batch = TrainingBatch::gather(bundle, &indices);
            let mut tape = Tape::new();
            let mut dropout = Dropout {
                rate: config.dropout,
                rng: &mut dropout_rng,
            };
            let graph = record_loss(&mut tape, &model, &batch, config.lambda, Some(&mut dropout))?;
            let parts = breakdown(&tape, &graph, config.lambda);
            if !parts.total.is_finite() {
                return Err(Error::TrainingDiverged {
                    step: global_step,
                    reason: format!(
                        "loss is not finite (classification {}, domain adaptation {})",
                        parts.classification, parts.domain_adaptation
                    ),
                });
            }
            let grads = tape.backward(graph.total);
            let mut gradient = Vec::with_capacity(flat.len());
            for (var, (name, tensor)) in graph.params.vars.iter().zip(model.parameters.named()) {
                match grads.get(*var) {
                    Some(g) => {
                        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                            return Err(Error::TrainingDiverged {
                                step: global_step,
                                reason: format!("non-finite gradient for {name}[{bad}]"),
                            });
                        }
                        gradient.extend_from_slice(g);
                    }
                    None => gradient.resize(gradient.len() + tensor.len(), 0.0),
                }
            }
            adam.update(&mut flat, &gradient);
            model.parameters.set_flat(&flat);

            let batch_reference = tape.value(graph.reference).data();
            if reference_initialized {
                let k = config.reference_momentum;
                model
                    .reference
                    .iter_mut()
                    .zip(batch_reference)
                    .for_each(|(r, b)| *r = (1.0 - k) * *r + k * b);
            } else {
                model.reference.copy_from_slice(batch_reference);
                reference_initialized = true;
            }

            sum.total += parts.total;
            sum.classification += parts.classification;
            sum.domain_adaptation += parts.domain_adaptation;
            global_step += 1;
        }
        let n = steps.max(1) as f64;
        let summary = EpochSummary {
            epoch,
            steps,
            mean: LossBreakdown {
                total: sum.total / n,
                classification: sum.classification / n,
                domain_adaptation: sum.domain_adaptation / n,
                lambda: config.lambda,
            },
        };
        log::debug!("member seed {seed} epoch {epoch}: {:?}", summary.mean);
        history.push(summary);
    }

    let target_healthy: Vec<_> = bundle.b.samples.iter().collect();
    model.set_reference_from(&target_healthy)?;
    Ok(TrainedMember { model, history })
}
