//! `ppr sweep`: patch-size and model-size sweeps from a JSON config.

use crate::runconfig;
use clap::Args;
use ppr_core::evaluation::{
    model_size_sweep, patch_size_sweep, Aggregator, SweepConfig,
};
use ppr_core::evaluation::{ModelSizeRow, PatchSizeRow};
use ppr_core::reporting::{self, Series};
use ppr_core::volumes::load_dataset;
use ppr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct SweepArgs {
    /// "patch-size" or "model-size".
    #[arg(long)]
    kind: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepFile {
    pub manifest: PathBuf,
    pub patch_sizes: Vec<usize>,
    pub m_values: Vec<usize>,
    pub m: usize,
    pub s_p: usize,
    pub epochs: usize,
    pub lr_ppr: f64,
    pub lr_ae: f64,
    pub patches_per_volume: usize,
    pub volumes_per_batch: usize,
    pub seed: u64,
    pub stride: usize,
    pub agg: String,
}

impl Default for SweepFile {
    fn default() -> Self {
        SweepFile {
            manifest: PathBuf::new(),
            patch_sizes: vec![19, 23, 27],
            m_values: vec![1, 2, 4],
            m: 2,
            s_p: 19,
            epochs: 200,
            lr_ppr: 1e-4,
            lr_ae: 1e-3,
            patches_per_volume: 256,
            volumes_per_batch: 4,
            seed: 7,
            stride: 1,
            agg: "p99".into(),
        }
    }
}

pub fn run(args: SweepArgs) -> Result<()> {
    let file: SweepFile = runconfig::load_partial(Some(&args.config))?;
    if file.manifest.as_os_str().is_empty() {
        return Err(Error::Config("sweep config needs a \"manifest\" path".into()));
    }
    let agg: Aggregator = super::parse_aggregator(&file.agg)?;
    crate::prepare_out_dir(&args.out, args.force)?;

    // Manifest paths resolve relative to the config file's directory.
    let manifest = if file.manifest.is_absolute() {
        file.manifest.clone()
    } else {
        args.config
            .parent()
            .unwrap_or(Path::new("."))
            .join(&file.manifest)
    };
    let cases = load_dataset(&manifest, None)?;
    let cfg = SweepConfig {
        m: file.m,
        s_p: file.s_p,
        epochs: file.epochs,
        lr_ppr: file.lr_ppr,
        lr_ae: file.lr_ae,
        patches_per_volume: file.patches_per_volume,
        volumes_per_batch: file.volumes_per_batch,
        seed: file.seed,
        stride: file.stride,
        agg,
    };

    match args.kind.as_str() {
        "patch-size" => {
            let rows = patch_size_sweep(&cfg, &file.patch_sizes, &cases)?;
            write_patch_outputs(&args.out, &rows)?;
        }
        "model-size" => {
            let rows = model_size_sweep(&cfg, &file.m_values, &cases)?;
            write_model_outputs(&args.out, &rows)?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep kind \"{other}\" (expected patch-size or model-size)"
            )))
        }
    }
    runconfig::persist(&args.out, &file)?;
    Ok(())
}

pub fn write_patch_outputs(out: &Path, rows: &[PatchSizeRow]) -> Result<()> {
    reporting::write_text(
        &out.join("patch_size_sweep.csv"),
        &ppr_core::evaluation::patch_size_rows_to_csv(rows),
    )?;
    let series = |pick: fn(&PatchSizeRow) -> f64, label: &'static str| Series {
        label,
        points: rows.iter().map(|r| (r.s_p as f64, pick(r))).collect(),
    };
    let x_min = rows.iter().map(|r| r.s_p).min().unwrap_or(0) as f64 - 1.0;
    let x_max = rows.iter().map(|r| r.s_p).max().unwrap_or(1) as f64 + 1.0;
    let svg = reporting::svg_line_plot(
        "AUROC vs patch size (ich)",
        "patch size",
        "AUROC",
        (x_min, x_max),
        (0.0, 1.0),
        &[
            series(|r| r.auroc_left, "left"),
            series(|r| r.auroc_right, "right"),
            series(|r| r.auroc_total, "combined"),
        ],
        false,
    );
    reporting::write_text(&out.join("patch_size_sweep.svg"), &svg)?;

    let lo = rows.iter().map(|r| r.auroc_total).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.auroc_total).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "combined AUROC spread across patch sizes: {:.4} (min {:.4}, max {:.4})",
        hi - lo,
        lo,
        hi
    );
    Ok(())
}

pub fn write_model_outputs(out: &Path, rows: &[ModelSizeRow]) -> Result<()> {
    reporting::write_text(
        &out.join("model_size_sweep.csv"),
        &ppr_core::evaluation::model_size_rows_to_csv(rows),
    )?;
    let series_for = |kind: &'static str, pick: fn(&ModelSizeRow) -> f64| Series {
        label: kind,
        points: rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| ((r.params as f64).log10(), pick(r)))
            .collect(),
    };
    let xs: Vec<f64> = rows.iter().map(|r| (r.params as f64).log10()).collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min) - 0.2;
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.2;
    let svg = reporting::svg_line_plot(
        "AUROC (ich) vs log10 parameters",
        "log10 parameter count",
        "AUROC",
        (x_min, x_max),
        (0.0, 1.0),
        &[
            series_for("ppr", |r| r.auroc_ich),
            series_for("ae", |r| r.auroc_ich),
        ],
        false,
    );
    reporting::write_text(&out.join("model_size_sweep.svg"), &svg)?;
    Ok(())
}
