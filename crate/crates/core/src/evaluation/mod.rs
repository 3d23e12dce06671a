//! Structure-level anomaly scoring, ROC analysis, inter-rater agreement,
//! and the patch-size / model-size sweeps.

mod kappa;
mod roc;
mod sweeps;
mod tasks;

pub use kappa::{fleiss_kappa, rater_vs_majority, Feature, RaterTable};
pub use roc::{pairwise_auroc, roc_curve, RocCurve, RocPoint};
pub use sweeps::{
    model_size_rows_to_csv, model_size_sweep, patch_size_rows_to_csv, patch_size_sweep,
    ModelSizeRow, PatchSizeRow, SweepConfig,
};
pub use tasks::{
    evaluate_from_maps, evaluate_tasks, CaseMaps, EvalOptions, StructureScore, TaskKind,
    TaskResults,
};

use crate::error::{Error, Result};
use crate::pipeline::ErrorMap;
use serde::{Deserialize, Serialize};

/// How error-map values inside a structure mask collapse to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Max,
    Mean,
    /// Nearest-rank percentile, q in (0, 100].
    Percentile(f64),
}

impl Default for Aggregator {
    fn default() -> Self {
        Aggregator::Percentile(99.0)
    }
}

impl std::fmt::Display for Aggregator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Aggregator::Max => write!(f, "max"),
            Aggregator::Mean => write!(f, "mean"),
            Aggregator::Percentile(q) => write!(f, "p{q}"),
        }
    }
}

/// Aggregates map values inside a structure mask.
pub fn structure_score(map: &ErrorMap, mask: &[bool], agg: Aggregator) -> Result<f64> {
    if mask.len() != map.values.len() {
        return Err(Error::Evaluation(format!(
            "mask length {} does not match map {}",
            mask.len(),
            map.values.len()
        )));
    }
    let mut inside: Vec<f32> = map
        .values
        .iter()
        .zip(mask)
        .filter_map(|(&v, &m)| if m { Some(v) } else { None })
        .collect();
    if inside.is_empty() {
        return Err(Error::Evaluation("structure mask is empty".into()));
    }
    Ok(match agg {
        Aggregator::Max => inside.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64,
        Aggregator::Mean => inside.iter().map(|&v| v as f64).sum::<f64>() / inside.len() as f64,
        Aggregator::Percentile(q) => {
            if !(q > 0.0 && q <= 100.0) {
                return Err(Error::Config(format!("percentile must be in (0,100], got {q}")));
            }
            // Nearest-rank: the ceil(q/100 * n)-th smallest value.
            let n = inside.len();
            let rank = ((q / 100.0 * n as f64).ceil() as usize).clamp(1, n);
            let idx = rank - 1;
            *inside
                .select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap())
                .1 as f64
        }
    })
}
