//! Sim-to-real quadrotor propeller fault diagnosis.
//!
//! The crate is `no_std` (with `alloc`) and holds every computational piece
//! of the pipeline:
//!
//! * [`sim`] flies a quadrotor through waypoints under wind and propeller
//!   faults and records flight logs.
//! * [`data`] turns flight logs into windowed samples and the four training
//!   datasets (source, target all-healthy, source all-healthy, target copy).
//! * [`nn`] is a small reverse-mode autodiff engine plus the
//!   difference-based convolutional classifier and its training loop.
//! * [`ensemble`] combines members by soft voting and measures predictive
//!   entropy.
//! * [`ufc`] accepts or rejects ensemble predictions against a calibrated
//!   entropy threshold and reports accuracy and data usage.
//!
//! File formats, configuration files and the command line live in the `ufc`
//! companion crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod ensemble;
mod error;
mod label;
pub mod nn;
pub mod sim;
pub mod ufc;

pub use error::{Error, Result};
pub use label::{Label, NUM_CLASSES};

/// Version tag written into every model file. Files with a different tag are
/// refused before any forward pass.
pub const MODEL_FORMAT_VERSION: u32 = 1;
