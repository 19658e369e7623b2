//! Minimal autodiff engine and the difference-based convolutional
//! classifier.

mod gemm;
mod gradcheck;
mod loss;
mod mmd;
mod model;
mod tape;
mod tensor;
mod train;

pub use gradcheck::{
    analytic_gradient, compare_with_finite_differences, grad_check, gradient_floor, relative_error,
    GradCheckReport,
};
pub use loss::{loss, LossBreakdown, TrainingBatch};
pub use mmd::{median_bandwidth, mmd_squared};
pub use model::{Architecture, ForwardOutput, MemberModel, Parameters};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{train_member, Adam, EpochSummary, TrainConfig, TrainedMember};

/// Default finite-difference step for gradient checks.
pub const DEFAULT_GRAD_CHECK_EPSILON: f64 = 1e-5;
