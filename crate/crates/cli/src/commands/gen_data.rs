//! `ppr gen-data`: synthetic dataset generation.

use crate::runconfig;
use clap::Args;
use ppr_core::volumes::{generate_dataset, DatasetConfig, DEFAULT_TEST_HEALTHY_FRAC};
use ppr_core::Result;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Args)]
pub struct GenDataArgs {
    /// Output directory for volumes and the manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_healthy: Option<usize>,
    #[arg(long)]
    n_ich: Option<usize>,
    #[arg(long)]
    n_fracture: Option<usize>,
    /// Grid side of each volume.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of healthy cases held out for testing.
    #[arg(long)]
    test_healthy_frac: Option<f64>,
    #[arg(long)]
    anomaly_radius_frac: Option<f64>,
    #[arg(long)]
    texture_scale: Option<f64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct GenDataFile {
    n_healthy: Option<usize>,
    n_ich: Option<usize>,
    n_fracture: Option<usize>,
    size: Option<usize>,
    seed: Option<u64>,
    test_healthy_frac: Option<f64>,
    anomaly_radius_frac: Option<f64>,
    texture_scale: Option<f64>,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let file: GenDataFile = runconfig::load_partial(args.config.as_deref())?;
    let cfg = DatasetConfig {
        n_healthy: runconfig::pick(args.n_healthy, file.n_healthy, 48),
        n_ich: runconfig::pick(args.n_ich, file.n_ich, 12),
        n_fracture: runconfig::pick(args.n_fracture, file.n_fracture, 8),
        size: runconfig::pick(args.size, file.size, 64),
        seed: runconfig::pick(args.seed, file.seed, 7),
        test_healthy_frac: runconfig::pick(
            args.test_healthy_frac,
            file.test_healthy_frac,
            DEFAULT_TEST_HEALTHY_FRAC,
        ),
        anomaly_radius_frac: runconfig::pick(args.anomaly_radius_frac, file.anomaly_radius_frac, 0.09),
        texture_scale: runconfig::pick(args.texture_scale, file.texture_scale, 1.0),
    };
    crate::prepare_out_dir(&args.out, args.force)?;
    generate_dataset(&args.out, &cfg)?;
    runconfig::persist(&args.out, &cfg)?;
    Ok(())
}
