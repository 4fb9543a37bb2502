//! Gait phase segmentation from a single shank-worn IMU.
//!
//! The crate trains a compact 1-D temporal U-Net to label every sample of a
//! six-channel accelerometer/gyroscope stream as stance or swing, and ships
//! the surrounding system: deterministic preprocessing, a synthetic gait
//! generator for end-to-end testing, a training loop with cross-validation,
//! gait quality metrics, and a streaming inference runtime.

pub mod container;
pub mod datapipe;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod runtime;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
