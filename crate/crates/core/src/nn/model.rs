use alloc::format;
use alloc::vec::Vec;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::{Tensor, TrainConfig};
use crate::data::{Normalization, Sample, INPUT_ROWS};
use crate::{Error, Result, NUM_CLASSES};

/// Layer sizes of the difference-based classifier:
///
/// ```text
/// input [7, window]
///   -> conv(k) -> relu -> avgpool/2        [c1, window/2]
///   -> conv(k) -> relu -> avgpool/2        [c2, window/4]
///   -> flatten -> dropout -> dense -> relu  features [d]
///   -> features - reference                 difference [d]
///   -> dense                                logits [5]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Columns of the input matrix, `L + 1`.
    pub window: usize,
    pub conv_channels: [usize; 2],
    pub kernel_size: usize,
    pub feature_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            window: 16,
            conv_channels: [16, 32],
            kernel_size: 5,
            feature_dim: 64,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(Error::InvalidConfig(format!(
                "window of {} columns is too short for two pooling stages",
                self.window
            )));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::InvalidConfig("kernel size must be odd".into()));
        }
        if self.conv_channels.contains(&0) || self.feature_dim == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn padding(&self) -> usize {
        self.kernel_size / 2
    }

    pub fn flat_dim(&self) -> usize {
        self.conv_channels[1] * (self.window / 2 / 2)
    }

    pub fn parameter_count(&self) -> usize {
        let [c1, c2] = self.conv_channels;
        let k = self.kernel_size;
        (c1 * INPUT_ROWS * k + c1)
            + (c2 * c1 * k + c2)
            + (self.feature_dim * self.flat_dim() + self.feature_dim)
            + (NUM_CLASSES * self.feature_dim + NUM_CLASSES)
    }
}

/// Learnable tensors of one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub conv1_weight: Tensor,
    pub conv1_bias: Tensor,
    pub conv2_weight: Tensor,
    pub conv2_bias: Tensor,
    pub feature_weight: Tensor,
    pub feature_bias: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

impl Parameters {
    /// Uniform fan-in initialization, `+-sqrt(6 / fan_in)` for layers
    /// followed by a rectifier and `+-sqrt(3 / fan_in)` for the head. Biases
    /// start at zero.
    pub fn init(arch: &Architecture, rng: &mut impl Rng) -> Self {
        let [c1, c2] = arch.conv_channels;
        let k = arch.kernel_size;
        let d = arch.feature_dim;
        let flat = arch.flat_dim();
        let relu_bound = |fan_in: usize| libm::sqrt(6.0 / fan_in as f64);
        Self {
            conv1_weight: uniform(&[c1, INPUT_ROWS, k], relu_bound(INPUT_ROWS * k), rng),
            conv1_bias: Tensor::zeros(&[c1]),
            conv2_weight: uniform(&[c2, c1, k], relu_bound(c1 * k), rng),
            conv2_bias: Tensor::zeros(&[c2]),
            feature_weight: uniform(&[d, flat], relu_bound(flat), rng),
            feature_bias: Tensor::zeros(&[d]),
            head_weight: uniform(&[NUM_CLASSES, d], libm::sqrt(3.0 / d as f64), rng),
            head_bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("conv1.weight", &self.conv1_weight),
            ("conv1.bias", &self.conv1_bias),
            ("conv2.weight", &self.conv2_weight),
            ("conv2.bias", &self.conv2_bias),
            ("feature.weight", &self.feature_weight),
            ("feature.bias", &self.feature_bias),
            ("head.weight", &self.head_weight),
            ("head.bias", &self.head_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv1_weight,
            &mut self.conv1_bias,
            &mut self.conv2_weight,
            &mut self.conv2_bias,
            &mut self.feature_weight,
            &mut self.feature_bias,
            &mut self.head_weight,
            &mut self.head_bias,
        ]
    }

    pub fn len(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values concatenated in [`named`](Self::named) order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.named()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// Name and element offset of flat index `index`.
    pub fn locate(&self, mut index: usize) -> (&'static str, usize) {
        for (name, t) in self.named() {
            if index < t.len() {
                return (name, index);
            }
            index -= t.len();
        }
        ("<out of range>", index)
    }

    /// Tensor shapes in [`named`](Self::named) order.
    pub fn shapes(arch: &Architecture) -> [Vec<usize>; 8] {
        let [c1, c2] = arch.conv_channels;
        let (k, d) = (arch.kernel_size, arch.feature_dim);
        [
            alloc::vec![c1, INPUT_ROWS, k],
            alloc::vec![c1],
            alloc::vec![c2, c1, k],
            alloc::vec![c2],
            alloc::vec![d, arch.flat_dim()],
            alloc::vec![d],
            alloc::vec![NUM_CLASSES, d],
            alloc::vec![NUM_CLASSES],
        ]
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        for ((name, have), want) in self.named().iter().zip(Self::shapes(arch)) {
            if have.shape() != want.as_slice() {
                return Err(Error::IncompatibleModel(format!(
                    "parameter {name} has shape {:?}, architecture expects {:?}",
                    have.shape(),
                    want
                )));
            }
        }
        Ok(())
    }
}

/// Parameter tensors registered as tape leaves.
pub(crate) struct ParamVars {
    pub vars: [Var; 8],
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &Parameters) -> Self {
        let vars = params.named().map(|(_, t)| tape.leaf(t.clone()));
        Self { vars }
    }
}

/// Dropout in training mode: rate and generator for the masks.
pub(crate) struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

/// One trained (or freshly initialized) ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberModel {
    pub format_version: u32,
    pub architecture: Architecture,
    pub parameters: Parameters,
    /// Mean all-healthy feature vector that features are differenced against.
    pub reference: Vec<f64>,
    /// Input statistics the member was trained with.
    pub normalization: Normalization,
    pub seed: u64,
    pub training: TrainConfig,
}

/// Inference outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `[batch, 5]`
    pub logits: Tensor,
    /// `[batch, feature_dim]`, before differencing
    pub features: Tensor,
}

/// Stacks samples into a `[batch, 7, window]` tensor.
pub(crate) fn input_tensor(arch: &Architecture, samples: &[&Sample]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(samples.len() * INPUT_ROWS * arch.window);
    for s in samples {
        if s.columns != arch.window || s.matrix.len() != INPUT_ROWS * arch.window {
            return Err(Error::ShapeMismatch {
                layer: "input",
                expected: format!("[{INPUT_ROWS}, {}]", arch.window),
                actual: format!("[{}, {}]", s.matrix.len() / s.columns.max(1), s.columns),
            });
        }
        data.extend_from_slice(&s.matrix);
    }
    Tensor::new(alloc::vec![samples.len(), INPUT_ROWS, arch.window], data)
}

/// Records the convolutional trunk and feature layer; returns features
/// `[batch, feature_dim]`.
pub(crate) fn trunk<R: Rng>(
    tape: &mut Tape,
    arch: &Architecture,
    p: &ParamVars,
    input: Tensor,
    dropout: Option<&mut Dropout<'_, R>>,
) -> Result<Var> {
    let batch = input.shape()[0];
    let [w1, b1, w2, b2, wf, bf, _, _] = p.vars;
    let x = tape.leaf(input);
    let h = tape.conv1d("conv1", x, w1, b1, arch.padding())?;
    let h = tape.relu(h);
    let h = tape.avg_pool2("pool1", h)?;
    let h = tape.conv1d("conv2", h, w2, b2, arch.padding())?;
    let h = tape.relu(h);
    let h = tape.avg_pool2("pool2", h)?;
    let mut h = tape.reshape(h, &[batch, arch.flat_dim()])?;
    if let Some(dropout) = dropout {
        if dropout.rate > 0.0 {
            let keep = 1.0 - dropout.rate;
            let bernoulli = Bernoulli::new(keep).map_err(|_| {
                Error::InvalidConfig(format!("dropout rate {} outside [0, 1)", dropout.rate))
            })?;
            let mask = (0..tape.value(h).len())
                .map(|_| {
                    if bernoulli.sample(dropout.rng) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            h = tape.mask(h, mask)?;
        }
    }
    let f = tape.linear("feature", h, wf, bf)?;
    Ok(tape.relu(f))
}

/// Difference against the reference, then the logit layer.
pub(crate) fn head(tape: &mut Tape, p: &ParamVars, features: Var, reference: Var) -> Result<Var> {
    let [_, _, _, _, _, _, wh, bh] = p.vars;
    let diff = tape.sub_row(features, reference)?;
    tape.linear("head", diff, wh, bh)
}

/// Batch size used when running inference over large sample sets.
const INFERENCE_CHUNK: usize = 256;

impl MemberModel {
    /// Freshly initialized member with a zero reference vector.
    pub fn init(
        architecture: Architecture,
        training: TrainConfig,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        architecture.validate()?;
        let parameters = Parameters::init(&architecture, rng);
        Ok(Self {
            format_version: crate::MODEL_FORMAT_VERSION,
            reference: alloc::vec![0.0; architecture.feature_dim],
            normalization: Normalization::identity(),
            architecture,
            parameters,
            seed,
            training,
        })
    }

    /// Checks the format tag and that every tensor matches the architecture.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != crate::MODEL_FORMAT_VERSION {
            return Err(Error::IncompatibleModel(format!(
                "model format version {} is not the supported version {}",
                self.format_version,
                crate::MODEL_FORMAT_VERSION
            )));
        }
        self.architecture.validate()?;
        self.parameters.check(&self.architecture)?;
        if self.reference.len() != self.architecture.feature_dim {
            return Err(Error::IncompatibleModel(format!(
                "reference vector has {} entries, feature dimension is {}",
                self.reference.len(),
                self.architecture.feature_dim
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass (no dropout).
    pub fn forward(&self, samples: &[&Sample]) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let p = ParamVars::register(&mut tape, &self.parameters);
        let input = input_tensor(&self.architecture, samples)?;
        let features =
            trunk::<rand_chacha::ChaCha8Rng>(&mut tape, &self.architecture, &p, input, None)?;
        let reference = tape.leaf(Tensor::new(
            alloc::vec![self.reference.len()],
            self.reference.clone(),
        )?);
        let logits = head(&mut tape, &p, features, reference)?;
        Ok(ForwardOutput {
            logits: tape.value(logits).clone(),
            features: tape.value(features).clone(),
        })
    }

    /// Logits for any number of samples, one `[f64; 5]` per sample.
    pub fn logits(&self, samples: &[&Sample]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(INFERENCE_CHUNK) {
            let f = self.forward(chunk)?;
            out.extend(
                (0..chunk.len())
                    .map(|i| <[f64; NUM_CLASSES]>::try_from(f.logits.row(i)).expect("5 logits")),
            );
        }
        Ok(out)
    }

    /// Mean inference-mode feature vector of `samples`.
    pub fn mean_features(&self, samples: &[&Sample]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = self.architecture.feature_dim;
        let mut sum = alloc::vec![0.0; d];
        for chunk in samples.chunks(INFERENCE_CHUNK) {
            let f = self.forward(chunk)?;
            for i in 0..chunk.len() {
                sum.iter_mut()
                    .zip(f.features.row(i))
                    .for_each(|(s, v)| *s += v);
            }
        }
        sum.iter_mut().for_each(|s| *s /= samples.len() as f64);
        Ok(sum)
    }

    /// Replaces the reference with the mean feature of `samples`, normally
    /// the all-healthy samples of the domain being diagnosed.
    pub fn set_reference_from(&mut self, samples: &[&Sample]) -> Result<()> {
        self.reference = self.mean_features(samples)?;
        Ok(())
    }
}
