//! Training loops, the coordinate loss, sliding-window error-map inference,
//! and error-map post-filters.

mod filters;
mod infer;
mod train;

pub use filters::{filter_error_map, FilterKind};
pub use infer::{
    infer_error_map_ae, infer_error_map_ae_with, infer_error_map_ppr, infer_error_map_ppr_with,
};
pub use train::{load_trained, save_trained, train_ae, train_ppr, TrainedModel};

use crate::error::{Error, Result};
use crate::volumes::{Coord, Dims, Volume};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Euclidean distance between a true and a predicted position; the training
/// loss and the per-voxel inference error. Not squared.
pub fn coords_loss(x: Coord, x_hat: Coord) -> f64 {
    let (dx, dy, dz) = (x.x - x_hat.x, x.y - x_hat.y, x.z - x_hat.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Patches per volume step (position regressor).
    pub patches_per_volume: usize,
    /// Whole volumes per step (autoencoder).
    pub volumes_per_batch: usize,
    /// Patch side; must be odd.
    pub s_p: usize,
    pub seed: u64,
    /// Power-iteration rounds per training step for spectral normalization.
    pub power_iters: usize,
    pub checkpoint_every: Option<usize>,
    /// Where periodic checkpoints are written, when enabled.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn ppr_defaults() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-4,
            patches_per_volume: 256,
            volumes_per_batch: 4,
            s_p: 19,
            seed: 7,
            power_iters: 1,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }

    pub fn ae_defaults() -> Self {
        TrainConfig {
            lr: 1e-3,
            ..TrainConfig::ppr_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is admitted: it must behave as an exact no-op on parameters.
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.patches_per_volume < 1 {
            return Err(Error::Config("patches_per_volume must be >= 1".into()));
        }
        if self.volumes_per_batch < 1 {
            return Err(Error::Config("volumes_per_batch must be >= 1".into()));
        }
        if self.s_p % 2 == 0 {
            return Err(Error::Config(format!("patch size must be odd, got {}", self.s_p)));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss and wall-clock seconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// CSV rendering: `epoch,loss,seconds` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.seconds));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(Error::io(path))
    }
}

/// Per-voxel nonnegative error values aligned with a source volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub dims: Dims,
    pub values: Vec<f32>,
}

impl ErrorMap {
    pub fn new(dims: Dims, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.count() {
            return Err(Error::Shape(format!(
                "error map length {} does not match dims {:?}",
                values.len(),
                dims.as_array()
            )));
        }
        Ok(ErrorMap { dims, values })
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Serialized through the VOL1 container with zero masks.
    pub fn to_volume(&self) -> Volume {
        Volume {
            dims: self.dims,
            voxels: self.values.clone(),
            spacing: [1.0; 3],
        }
    }

    pub fn from_volume(v: Volume) -> Self {
        ErrorMap {
            dims: v.dims,
            values: v.voxels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_loss_basics() {
        let o = Coord { x: 0.0, y: 0.0, z: 0.0 };
        assert_eq!(coords_loss(o, o), 0.0);
        let far = Coord { x: 1.0, y: 1.0, z: 1.0 };
        assert!((coords_loss(o, far) - 3f64.sqrt()).abs() < 1e-12);
        let a = Coord { x: 0.5, y: 0.5, z: 0.5 };
        let b = Coord { x: 0.5, y: 0.5, z: 0.9 };
        assert!((coords_loss(a, b) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn history_csv_shape() {
        let h = TrainHistory {
            epochs: vec![
                EpochStats { epoch: 0, loss: 0.5, seconds: 1.25 },
                EpochStats { epoch: 1, loss: 0.25, seconds: 1.5 },
            ],
        };
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,loss,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0.5,"));
    }
}
