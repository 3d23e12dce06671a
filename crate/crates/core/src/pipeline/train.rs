//! Training loops for the position regressor and the autoencoder baseline.

use super::{TrainConfig, TrainHistory};
use crate::diffcore::{
    save_checkpoint, Adam, AdamConfig, CheckpointHeader, Grads, Network, ParamStore, Tensor5,
};
use crate::error::{Error, Result};
use crate::models::{self, NetworkKind, NetworkSpec};
use crate::pipeline::EpochStats;
use crate::sampling::sample_patch_batch;
use crate::volumes::LoadedCase;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub net: Network,
    pub store: ParamStore<f32>,
    pub history: TrainHistory,
}

fn validate_training_set(cases: &[&LoadedCase]) -> Result<()> {
    if cases.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    for case in cases {
        if !case.entry.labels.is_healthy() {
            return Err(Error::Validation(format!(
                "anomalous volume {} in training manifest",
                case.entry.path.display()
            )));
        }
        if case.masks.is_none() {
            return Err(Error::Validation(format!(
                "training volume {} has no masks",
                case.entry.path.display()
            )));
        }
    }
    Ok(())
}

fn checkpoint_header(spec: &NetworkSpec, cfg: &TrainConfig, epoch: usize) -> CheckpointHeader {
    CheckpointHeader {
        kind: spec.kind.as_str().to_string(),
        m: spec.m,
        input_side: spec.input_side,
        block_variant: spec.block_variant.clone(),
        seed: cfg.seed,
        epoch,
        layers: spec.layers.clone(),
    }
}

fn maybe_checkpoint(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    store: &ParamStore<f32>,
    epoch: usize,
) -> Result<()> {
    if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
        if every > 0 && (epoch + 1) % every == 0 {
            std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
            let path = dir.join(format!("ckpt_epoch{:05}.pprc", epoch + 1));
            save_checkpoint(&path, &checkpoint_header(spec, cfg, epoch + 1), store)?;
        }
    }
    Ok(())
}

/// Trains the position regressor: per epoch, volumes are visited in a
/// seeded-shuffled order; each volume contributes one batch of patches, its
/// mean coordinate loss, and a single optimizer step.
pub fn train_ppr(m: usize, cases: &[&LoadedCase], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    validate_training_set(cases)?;
    let spec = models::build_ppr(m, cfg.s_p)?;
    let mut store = ParamStore::<f32>::new();
    let net = models::instantiate(&spec, cfg.seed, &mut store)?;
    let mut adam = Adam::new(&store, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();

    let mut order: Vec<usize> = (0..cases.len()).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for &vi in &order {
            let case = cases[vi];
            let masks = case.masks.as_ref().expect("validated above");
            let batch = sample_patch_batch(
                &case.volume,
                &masks.foreground,
                cfg.patches_per_volume,
                cfg.s_p,
                &mut rng,
            )?;

            let b = batch.len();
            let s = cfg.s_p;
            let mut data = Vec::with_capacity(b * s * s * s);
            for p in &batch.patches {
                data.extend_from_slice(&p.values);
            }
            let input = Tensor5::from_vec([b, 1, s, s, s], data)?;

            net.power_iterate(&mut store, cfg.power_iters);
            let (out, tape) = net.forward(&store, &input)?;

            // Mean Euclidean loss and its gradient w.r.t. the predictions.
            let mut upstream = Tensor5::zeros(out.shape());
            let mut loss = 0.0f64;
            for (i, target) in batch.targets.iter().enumerate() {
                let t = [target.x as f32, target.y as f32, target.z as f32];
                let o = &out.data()[i * 3..(i + 1) * 3];
                let d = [o[0] - t[0], o[1] - t[1], o[2] - t[2]];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                loss += dist as f64;
                if dist > 1e-12 {
                    let scale = 1.0 / (b as f32 * dist);
                    let u = &mut upstream.data_mut()[i * 3..(i + 1) * 3];
                    u[0] = d[0] * scale;
                    u[1] = d[1] * scale;
                    u[2] = d[2] * scale;
                }
            }
            let batch_loss = loss / b as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss at epoch {epoch}, volume {}",
                    case.entry.path.display()
                )));
            }
            epoch_loss += batch_loss;

            let mut grads = Grads::zeros_like(&store);
            net.backward(&store, &tape, upstream, &mut grads);
            adam.step(&mut store, &grads)?;
        }
        let mean_loss = epoch_loss / cases.len() as f64;
        history.epochs.push(EpochStats {
            epoch,
            loss: mean_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        maybe_checkpoint(&spec, cfg, &store, epoch)?;
        if (epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs {
            eprintln!(
                "[train ppr] epoch {:>4}/{} loss {:.6}",
                epoch + 1,
                cfg.epochs,
                mean_loss
            );
        }
    }

    Ok(TrainedModel {
        spec,
        net,
        store,
        history,
    })
}

/// Trains the autoencoder baseline with a voxel-wise L1 loss over batches of
/// whole volumes.
pub fn train_ae(m: usize, cases: &[&LoadedCase], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    validate_training_set(cases)?;
    let dims = cases[0].volume.dims;
    if dims.x != dims.y || dims.y != dims.z {
        return Err(Error::Shape(format!(
            "autoencoder expects cubic volumes, got {:?}",
            dims.as_array()
        )));
    }
    for case in cases {
        if case.volume.dims != dims {
            return Err(Error::Shape(format!(
                "volume {} dims {:?} differ from {:?}",
                case.entry.path.display(),
                case.volume.dims.as_array(),
                dims.as_array()
            )));
        }
    }
    let n = dims.x;
    let spec = models::build_ae(m, n)?;
    let mut store = ParamStore::<f32>::new();
    let net = models::instantiate(&spec, cfg.seed, &mut store)?;
    let mut adam = Adam::new(&store, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory::default();

    let mut order: Vec<usize> = (0..cases.len()).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.volumes_per_batch) {
            let b = chunk.len();
            let mut data = Vec::with_capacity(b * n * n * n);
            for &vi in chunk {
                data.extend_from_slice(&cases[vi].volume.voxels);
            }
            let input = Tensor5::from_vec([b, 1, n, n, n], data)?;

            net.power_iterate(&mut store, cfg.power_iters);
            let (out, tape) = net.forward(&store, &input)?;

            // L1 loss: mean absolute voxel difference.
            let numel = out.numel();
            let scale = 1.0 / numel as f32;
            let mut upstream = Tensor5::zeros(out.shape());
            let mut loss = 0.0f64;
            for ((&o, &t), u) in out
                .data()
                .iter()
                .zip(input.data())
                .zip(upstream.data_mut())
            {
                let d = o - t;
                loss += d.abs() as f64;
                *u = if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                };
            }
            let batch_loss = loss / numel as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!("training loss at epoch {epoch}")));
            }
            epoch_loss += batch_loss;
            steps += 1;

            let mut grads = Grads::zeros_like(&store);
            net.backward(&store, &tape, upstream, &mut grads);
            adam.step(&mut store, &grads)?;
        }
        let mean_loss = epoch_loss / steps as f64;
        history.epochs.push(EpochStats {
            epoch,
            loss: mean_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        maybe_checkpoint(&spec, cfg, &store, epoch)?;
        if (epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs {
            eprintln!(
                "[train ae] epoch {:>4}/{} loss {:.6}",
                epoch + 1,
                cfg.epochs,
                mean_loss
            );
        }
    }

    Ok(TrainedModel {
        spec,
        net,
        store,
        history,
    })
}

/// Serializes a trained model into the checkpoint container.
pub fn save_trained(path: &std::path::Path, model: &TrainedModel, cfg: &TrainConfig) -> Result<()> {
    save_checkpoint(
        path,
        &checkpoint_header(&model.spec, cfg, model.history.epochs.len()),
        &model.store,
    )
}

/// Rebuilds a runtime network from a checkpoint.
pub fn load_trained(path: &std::path::Path) -> Result<(NetworkSpec, Network, ParamStore<f32>)> {
    let (header, mut store) = crate::diffcore::load_checkpoint(path)?;
    let kind = match header.kind.as_str() {
        "ppr" => NetworkKind::Ppr,
        "ae" => NetworkKind::Ae,
        other => {
            return Err(Error::Config(format!(
                "checkpoint has unknown network kind \"{other}\""
            )))
        }
    };
    let spec = NetworkSpec {
        kind,
        m: header.m,
        input_side: header.input_side,
        block_variant: header.block_variant.clone(),
        layers: header.layers.clone(),
    };
    let net = models::instantiate(&spec, header.seed, &mut store)?;
    Ok((spec, net, store))
}
