//! Synthetic dataset assembly: a directory of phantom volumes plus a
//! train/test manifest.
//!
//! Every anomalous case lands in the test split; a configurable fraction of
//! the healthy cases (default 21/131, the source data's holdout ratio)
//! joins them and the rest trains. Bleeds alternate hemispheres.

use super::{
    generate_phantom, write_manifest, write_volume, Anomaly, ManifestEntry, PhantomConfig, Split,
};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_TEST_HEALTHY_FRAC: f64 = 21.0 / 131.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_healthy: usize,
    pub n_ich: usize,
    pub n_fracture: usize,
    /// Grid side of every volume.
    pub size: usize,
    pub seed: u64,
    pub test_healthy_frac: f64,
    pub anomaly_radius_frac: f64,
    pub texture_scale: f64,
}

impl DatasetConfig {
    pub fn desk_defaults() -> Self {
        DatasetConfig {
            n_healthy: 48,
            n_ich: 12,
            n_fracture: 8,
            size: 64,
            seed: 7,
            test_healthy_frac: DEFAULT_TEST_HEALTHY_FRAC,
            anomaly_radius_frac: 0.09,
            texture_scale: 1.0,
        }
    }
}

/// Writes the volumes and manifest; returns the manifest path.
pub fn generate_dataset(out: &Path, cfg: &DatasetConfig) -> Result<PathBuf> {
    if !(cfg.test_healthy_frac >= 0.0 && cfg.test_healthy_frac <= 1.0) {
        return Err(Error::Config(format!(
            "test_healthy_frac must be in [0,1], got {}",
            cfg.test_healthy_frac
        )));
    }
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    let mut seed_rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut specs: Vec<Anomaly> = Vec::new();
    specs.extend(std::iter::repeat(Anomaly::None).take(cfg.n_healthy));
    for i in 0..cfg.n_ich {
        specs.push(if i % 2 == 0 {
            Anomaly::BlobLeft
        } else {
            Anomaly::BlobRight
        });
    }
    specs.extend(std::iter::repeat(Anomaly::ShellBreak).take(cfg.n_fracture));

    let n_test_healthy = if cfg.n_healthy == 0 {
        0
    } else {
        (((cfg.n_healthy as f64) * cfg.test_healthy_frac).round() as usize)
            .clamp(1, cfg.n_healthy)
    };

    let mut entries = Vec::with_capacity(specs.len());
    for (i, anomaly) in specs.iter().enumerate() {
        let phantom_cfg = PhantomConfig {
            n: cfg.size,
            seed: seed_rng.random::<u64>(),
            anomaly: *anomaly,
            anomaly_radius_frac: cfg.anomaly_radius_frac,
            texture_scale: cfg.texture_scale,
        };
        let (volume, masks, labels) = generate_phantom(&phantom_cfg)?;
        let name = format!("case_{i:04}.vol");
        write_volume(&out.join(&name), &volume, Some(&masks))?;
        // The last healthy cases are held out; anomalous cases always test.
        let split = if *anomaly == Anomaly::None {
            if i >= cfg.n_healthy - n_test_healthy {
                Split::Test
            } else {
                Split::Train
            }
        } else {
            Split::Test
        };
        entries.push(ManifestEntry {
            path: PathBuf::from(name),
            labels,
            split,
        });
    }
    let manifest = out.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumes::read_manifest;

    #[test]
    fn split_structure_and_minimum_holdout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            n_healthy: 4,
            n_ich: 0,
            n_fracture: 0,
            size: 32,
            seed: 1,
            ..DatasetConfig::desk_defaults()
        };
        let manifest = generate_dataset(dir.path(), &cfg).unwrap();
        let entries = read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 4);
        let test = entries.iter().filter(|e| e.split == Split::Test).count();
        assert!(test >= 1, "at least one healthy case must be held out");
    }

    #[test]
    fn anomalous_cases_always_test_and_alternate_sides() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            n_healthy: 3,
            n_ich: 4,
            n_fracture: 2,
            size: 32,
            seed: 5,
            ..DatasetConfig::desk_defaults()
        };
        let manifest = generate_dataset(dir.path(), &cfg).unwrap();
        let entries = read_manifest(&manifest).unwrap();
        let anomalous: Vec<_> = entries.iter().filter(|e| !e.labels.is_healthy()).collect();
        assert_eq!(anomalous.len(), 6);
        assert!(anomalous.iter().all(|e| e.split == Split::Test));
        let left = anomalous.iter().filter(|e| e.labels.bleeding_left).count();
        let right = anomalous.iter().filter(|e| e.labels.bleeding_right).count();
        assert_eq!((left, right), (2, 2));
    }
}
