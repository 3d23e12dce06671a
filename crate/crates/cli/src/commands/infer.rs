//! `ppr infer`: error map for a single volume.

use clap::Args;
use ppr_core::models::NetworkKind;
use ppr_core::pipeline::{
    filter_error_map, infer_error_map_ae, infer_error_map_ppr, load_trained, FilterKind,
};
use ppr_core::volumes::{read_volume, write_volume};
use ppr_core::{Error, Result};
use std::path::PathBuf;

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Inference lattice stride (1 = every voxel).
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Post-filter: none, median or erosion.
    #[arg(long, default_value = "none")]
    filter: String,
    /// Filter neighborhood side.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// When given, must match the checkpoint's patch size.
    #[arg(long)]
    patch_size: Option<usize>,
}

pub fn run(args: InferArgs) -> Result<()> {
    let (spec, net, store) = load_trained(&args.ckpt)?;
    if let Some(p) = args.patch_size {
        if p != spec.input_side {
            return Err(Error::Config(format!(
                "requested patch size {p} but checkpoint was trained at {}",
                spec.input_side
            )));
        }
    }
    let (volume, _) = read_volume(&args.volume)?;
    let map = match spec.kind {
        NetworkKind::Ppr => infer_error_map_ppr(&net, &store, &volume, args.stride)?,
        NetworkKind::Ae => infer_error_map_ae(&net, &store, &volume)?,
    };
    let map = match args.filter.as_str() {
        "none" => map,
        "median" => filter_error_map(&map, FilterKind::Median, args.k)?,
        "erosion" => filter_error_map(&map, FilterKind::GreyErosion, args.k)?,
        other => {
            return Err(Error::Config(format!(
                "unknown filter \"{other}\" (expected none, median or erosion)"
            )))
        }
    };
    write_volume(&args.out, &map.to_volume(), None)?;
    println!(
        "error map {}: min {:.6} mean {:.6} max {:.6}",
        args.out.display(),
        map.min(),
        map.mean(),
        map.max()
    );
    Ok(())
}
