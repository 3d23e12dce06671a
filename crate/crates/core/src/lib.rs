//! Anomaly detection for 3D volumes via patch position regression.
//!
//! A small convolutional network is trained on healthy volumes to predict the
//! normalized source coordinates of a cubic patch. At inference every voxel's
//! surrounding patch is pushed through the network and the coordinate
//! prediction error becomes a per-voxel anomaly map. The crate also contains
//! the reconstruction-error autoencoder baseline, a synthetic phantom
//! generator standing in for clinical CT data, and the ROC/agreement
//! evaluation machinery used to compare the two detectors.

pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod reporting;
pub mod sampling;
pub mod volumes;

pub use error::{Error, Result};
