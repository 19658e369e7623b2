//! Windowed samples, normalization and the training datasets.
//!
//! Dataset roles follow the training procedure:
//!
//! * **A**: every source (simulated) training sample,
//! * **B**: all-healthy target samples,
//! * **D**: the all-healthy subset of A,
//! * **E**: a copy of B, paired with D for domain adaptation.

mod batch;
mod dataset;
mod window;

pub use batch::{MinibatchIndices, MinibatchSampler};
pub use dataset::{build_datasets, Dataset, DatasetBundle, DatasetRole, Normalization};
pub use window::{window_flight, Sample, SampleOrigin, INPUT_ROWS};
