//! `ppr train`: fit a detector on the training split of a manifest.

use crate::runconfig;
use clap::Args;
use ppr_core::models::NetworkKind;
use ppr_core::pipeline::{save_trained, train_ae, train_ppr, TrainConfig};
use ppr_core::volumes::{load_dataset, Split};
use ppr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// "ppr" or "ae".
    #[arg(long)]
    model: Option<String>,
    /// Dataset manifest path.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Defaults to 1e-4 for the regressor, 1e-3 for the autoencoder.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patches_per_volume: Option<usize>,
    #[arg(long)]
    volumes_per_batch: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    model: Option<String>,
    data: Option<PathBuf>,
    m: Option<usize>,
    patch_size: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    patches_per_volume: Option<usize>,
    volumes_per_batch: Option<usize>,
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedTrain {
    pub model: String,
    pub data: PathBuf,
    pub m: usize,
    pub patch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub patches_per_volume: usize,
    pub volumes_per_batch: usize,
    pub checkpoint_every: Option<usize>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let file: TrainFile = runconfig::load_partial(args.config.as_deref())?;
    let model = args
        .model
        .clone()
        .or_else(|| file.model.clone())
        .ok_or_else(|| Error::Config("--model (or a config file value) is required".into()))?;
    let kind = match model.as_str() {
        "ppr" => NetworkKind::Ppr,
        "ae" => NetworkKind::Ae,
        other => {
            return Err(Error::Config(format!(
                "unknown model \"{other}\" (expected ppr or ae)"
            )))
        }
    };
    let default_lr = match kind {
        NetworkKind::Ppr => 1e-4,
        NetworkKind::Ae => 1e-3,
    };
    let resolved = ResolvedTrain {
        model,
        data: args
            .data
            .clone()
            .or_else(|| file.data.clone())
            .ok_or_else(|| Error::Config("--data (or a config file value) is required".into()))?,
        m: runconfig::pick(args.m, file.m, 2),
        patch_size: runconfig::pick(args.patch_size, file.patch_size, 19),
        epochs: runconfig::pick(args.epochs, file.epochs, 200),
        lr: runconfig::pick(args.lr, file.lr, default_lr),
        seed: runconfig::pick(args.seed, file.seed, 7),
        patches_per_volume: runconfig::pick(args.patches_per_volume, file.patches_per_volume, 256),
        volumes_per_batch: runconfig::pick(args.volumes_per_batch, file.volumes_per_batch, 4),
        checkpoint_every: args.checkpoint_every.or(file.checkpoint_every),
    };

    crate::prepare_out_dir(&args.out, args.force)?;
    let cases = load_dataset(&resolved.data, Some(Split::Train))?;
    let refs: Vec<&_> = cases.iter().collect();
    let tc = TrainConfig {
        epochs: resolved.epochs,
        lr: resolved.lr,
        patches_per_volume: resolved.patches_per_volume,
        volumes_per_batch: resolved.volumes_per_batch,
        s_p: resolved.patch_size,
        seed: resolved.seed,
        power_iters: 1,
        checkpoint_every: resolved.checkpoint_every,
        checkpoint_dir: Some(args.out.clone()),
    };
    let trained = match kind {
        NetworkKind::Ppr => train_ppr(resolved.m, &refs, &tc)?,
        NetworkKind::Ae => train_ae(resolved.m, &refs, &tc)?,
    };
    save_trained(&args.out.join("model.pprc"), &trained, &tc)?;
    trained.history.write_csv(&args.out.join("history.csv"))?;
    runconfig::persist(&args.out, &resolved)?;
    if let Some(last) = trained.history.epochs.last() {
        println!(
            "trained {} for {} epochs, final loss {:.6}",
            resolved.model,
            trained.history.epochs.len(),
            last.loss
        );
    }
    Ok(())
}
