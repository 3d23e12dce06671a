//! Patch-size and model-size sweeps: train from scratch per setting with an
//! otherwise identical configuration, evaluate, and tabulate.

use super::roc::roc_curve;
use super::tasks::{evaluate_tasks, EvalOptions};
use super::Aggregator;
use crate::error::{Error, Result};
use crate::models::{self, NetworkKind};
use crate::pipeline::{train_ae, train_ppr, TrainConfig};
use crate::volumes::{LoadedCase, Split};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Base network size parameter (patch-size sweep trains at this m).
    pub m: usize,
    /// Base patch size (model-size sweep trains at this s_p).
    pub s_p: usize,
    pub epochs: usize,
    pub lr_ppr: f64,
    pub lr_ae: f64,
    pub patches_per_volume: usize,
    pub volumes_per_batch: usize,
    pub seed: u64,
    /// Inference stride used when evaluating sweep models.
    pub stride: usize,
    pub agg: Aggregator,
}

impl SweepConfig {
    pub fn desk_defaults() -> Self {
        SweepConfig {
            m: 2,
            s_p: 19,
            epochs: 200,
            lr_ppr: 1e-4,
            lr_ae: 1e-3,
            patches_per_volume: 256,
            volumes_per_batch: 4,
            seed: 7,
            stride: 1,
            agg: Aggregator::default(),
        }
    }

    fn train_config(&self, s_p: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr,
            patches_per_volume: self.patches_per_volume,
            volumes_per_batch: self.volumes_per_batch,
            s_p,
            seed: self.seed,
            power_iters: 1,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchSizeRow {
    pub s_p: usize,
    pub auroc_left: f64,
    pub auroc_right: f64,
    pub auroc_total: f64,
}

pub fn patch_size_rows_to_csv(rows: &[PatchSizeRow]) -> String {
    let mut out = String::from("s_p,auroc_left,auroc_right,auroc_total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.s_p, r.auroc_left, r.auroc_right, r.auroc_total
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSizeRow {
    pub kind: String,
    pub m: usize,
    pub params: usize,
    pub memory_total_bytes: usize,
    pub auroc_ich: f64,
    pub auroc_fracture: f64,
}

pub fn model_size_rows_to_csv(rows: &[ModelSizeRow]) -> String {
    let mut out = String::from("kind,m,params,memory_total_bytes,auroc_ich,auroc_fracture\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.kind, r.m, r.params, r.memory_total_bytes, r.auroc_ich, r.auroc_fracture
        ));
    }
    out
}

fn split_cases(cases: &[LoadedCase]) -> (Vec<&LoadedCase>, Vec<&LoadedCase>) {
    let train: Vec<&LoadedCase> = cases
        .iter()
        .filter(|c| c.entry.split == Split::Train)
        .collect();
    let test: Vec<&LoadedCase> = cases
        .iter()
        .filter(|c| c.entry.split == Split::Test)
        .collect();
    (train, test)
}

fn reject_duplicates(values: &[usize], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for &v in values {
        if !seen.insert(v) {
            return Err(Error::Config(format!("duplicate {what} {v} in sweep list")));
        }
    }
    if values.is_empty() {
        return Err(Error::Config(format!("empty {what} list")));
    }
    Ok(())
}

/// Trains one regressor from scratch per patch size and reports the
/// per-hemisphere and pooled AUROC.
pub fn patch_size_sweep(
    cfg: &SweepConfig,
    sizes: &[usize],
    cases: &[LoadedCase],
) -> Result<Vec<PatchSizeRow>> {
    reject_duplicates(sizes, "patch size")?;
    let (train, test) = split_cases(cases);
    let mut rows = Vec::with_capacity(sizes.len());
    for &s_p in sizes {
        let tc = cfg.train_config(s_p, cfg.lr_ppr);
        let model = train_ppr(cfg.m, &train, &tc)
            .map_err(|e| Error::Config(format!("patch size {s_p}: {e}")))?;
        let opts = EvalOptions {
            agg: cfg.agg,
            stride: cfg.stride,
            ..EvalOptions::default()
        };
        let res = evaluate_tasks(&model.net, &model.store, NetworkKind::Ppr, &test, &opts)?;

        let side = |structure: &str| -> Result<f64> {
            let samples: Vec<_> = res
                .ich_scores
                .iter()
                .filter(|s| s.structure == structure)
                .collect();
            let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
            let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
            Ok(roc_curve(&scores, &labels)?.auroc)
        };
        rows.push(PatchSizeRow {
            s_p,
            auroc_left: side("hemisphere_left")?,
            auroc_right: side("hemisphere_right")?,
            auroc_total: res.ich.auroc,
        });
    }
    Ok(rows)
}

/// Trains both detectors per network size and joins detection results with
/// the parameter counts and memory estimates.
pub fn model_size_sweep(
    cfg: &SweepConfig,
    ms: &[usize],
    cases: &[LoadedCase],
) -> Result<Vec<ModelSizeRow>> {
    reject_duplicates(ms, "network size")?;
    let (train, test) = split_cases(cases);
    let mut rows = Vec::with_capacity(ms.len() * 2);
    for &m in ms {
        let tc = cfg.train_config(cfg.s_p, cfg.lr_ppr);
        let ppr = train_ppr(m, &train, &tc).map_err(|e| Error::Config(format!("m={m}: {e}")))?;
        let opts = EvalOptions {
            agg: cfg.agg,
            stride: cfg.stride,
            ..EvalOptions::default()
        };
        let res = evaluate_tasks(&ppr.net, &ppr.store, NetworkKind::Ppr, &test, &opts)?;
        rows.push(ModelSizeRow {
            kind: "ppr".into(),
            m,
            params: models::count_params(&ppr.spec),
            memory_total_bytes: models::estimate_memory(&ppr.spec, cfg.patches_per_volume, 4)
                .total_bytes(),
            auroc_ich: res.ich.auroc,
            auroc_fracture: res.fracture.auroc,
        });

        let tc = cfg.train_config(cfg.s_p, cfg.lr_ae);
        let ae = train_ae(m, &train, &tc).map_err(|e| Error::Config(format!("m={m}: {e}")))?;
        let res = evaluate_tasks(&ae.net, &ae.store, NetworkKind::Ae, &test, &opts)?;
        rows.push(ModelSizeRow {
            kind: "ae".into(),
            m,
            params: models::count_params(&ae.spec),
            memory_total_bytes: models::estimate_memory(&ae.spec, cfg.volumes_per_batch, 4)
                .total_bytes(),
            auroc_ich: res.ich.auroc,
            auroc_fracture: res.fracture.auroc,
        });
    }
    Ok(rows)
}
