//! From error maps to task-level ROC results.
//!
//! The haemorrhage task pools hemisphere-level samples: every case
//! contributes a (score, label) pair for the left and for the right
//! hemisphere. The fracture task scores the skull mask. Autoencoder maps are
//! filtered first (grayscale erosion for the haemorrhage task, median for
//! fractures); regressor maps are used raw unless explicitly requested.

use super::roc::{roc_curve, RocCurve};
use super::{structure_score, Aggregator};
use crate::diffcore::{Network, ParamStore};
use crate::error::{Error, Result};
use crate::models::NetworkKind;
use crate::pipeline::{filter_error_map, infer_error_map_ae, infer_error_map_ppr, ErrorMap, FilterKind};
use crate::volumes::{CaseLabel, LoadedCase, MaskSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Ich,
    Fracture,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Ich => "ich",
            TaskKind::Fracture => "fracture",
        }
    }
}

/// One structure-level sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureScore {
    pub case_id: String,
    pub structure: String,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct TaskResults {
    pub ich: RocCurve,
    pub fracture: RocCurve,
    pub ich_scores: Vec<StructureScore>,
    pub fracture_scores: Vec<StructureScore>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub agg: Aggregator,
    /// Inference lattice stride for the position regressor.
    pub stride: usize,
    /// Apply the autoencoder post-filters to regressor maps too (ablation).
    pub filter_ppr: bool,
    pub filter_k: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            agg: Aggregator::default(),
            stride: 1,
            filter_ppr: false,
            filter_k: 5,
        }
    }
}

/// A raw (unfiltered) error map with the case's ground truth.
pub struct CaseMaps<'a> {
    pub case_id: String,
    pub map: ErrorMap,
    pub masks: &'a MaskSet,
    pub labels: CaseLabel,
}

/// Scores prepared maps. Filtering (by model kind) happens here so both the
/// live pipeline and oracle-map tests share one code path.
pub fn evaluate_from_maps(
    cases: &[CaseMaps<'_>],
    kind: NetworkKind,
    opts: &EvalOptions,
) -> Result<TaskResults> {
    if cases.is_empty() {
        return Err(Error::Evaluation("no cases to evaluate".into()));
    }
    let apply_filters = match kind {
        NetworkKind::Ae => true,
        NetworkKind::Ppr => opts.filter_ppr,
    };

    let mut ich_scores = Vec::with_capacity(cases.len() * 2);
    let mut fracture_scores = Vec::with_capacity(cases.len());
    for case in cases {
        let (ich_map, fracture_map) = if apply_filters {
            (
                filter_error_map(&case.map, FilterKind::GreyErosion, opts.filter_k)?,
                filter_error_map(&case.map, FilterKind::Median, opts.filter_k)?,
            )
        } else {
            (case.map.clone(), case.map.clone())
        };

        let score = |map: &ErrorMap, mask: &[bool], what: &str| -> Result<f64> {
            structure_score(map, mask, opts.agg).map_err(|e| {
                Error::Evaluation(format!("case {}: {what}: {e}", case.case_id))
            })
        };
        ich_scores.push(StructureScore {
            case_id: case.case_id.clone(),
            structure: "hemisphere_left".into(),
            score: score(&ich_map, &case.masks.hemisphere_left, "left hemisphere")?,
            label: case.labels.bleeding_left,
        });
        ich_scores.push(StructureScore {
            case_id: case.case_id.clone(),
            structure: "hemisphere_right".into(),
            score: score(&ich_map, &case.masks.hemisphere_right, "right hemisphere")?,
            label: case.labels.bleeding_right,
        });
        fracture_scores.push(StructureScore {
            case_id: case.case_id.clone(),
            structure: "skull".into(),
            score: score(&fracture_map, &case.masks.skull, "skull")?,
            label: case.labels.fracture,
        });
    }

    let curve = |samples: &[StructureScore]| -> Result<RocCurve> {
        let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        roc_curve(&scores, &labels)
    };
    Ok(TaskResults {
        ich: curve(&ich_scores)?,
        fracture: curve(&fracture_scores)?,
        ich_scores,
        fracture_scores,
    })
}

/// Runs inference over the test cases and evaluates both tasks.
pub fn evaluate_tasks(
    net: &Network,
    store: &ParamStore<f32>,
    kind: NetworkKind,
    cases: &[&LoadedCase],
    opts: &EvalOptions,
) -> Result<TaskResults> {
    let mut maps = Vec::with_capacity(cases.len());
    for case in cases {
        let masks = case.masks.as_ref().ok_or_else(|| {
            Error::Evaluation(format!("case {} has no masks", case.entry.path.display()))
        })?;
        let map = match kind {
            NetworkKind::Ppr => infer_error_map_ppr(net, store, &case.volume, opts.stride)?,
            NetworkKind::Ae => infer_error_map_ae(net, store, &case.volume)?,
        };
        maps.push(CaseMaps {
            case_id: case.entry.path.display().to_string(),
            map,
            masks,
            labels: case.entry.labels,
        });
    }
    evaluate_from_maps(&maps, kind, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumes::{generate_phantom, Anomaly, Dims, PhantomConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phantom_case(seed: u64, anomaly: Anomaly) -> (crate::volumes::MaskSet, CaseLabel) {
        let mut cfg = PhantomConfig::healthy(32, seed);
        cfg.anomaly = anomaly;
        let (_, masks, label) = generate_phantom(&cfg).unwrap();
        (masks, label)
    }

    /// Error = 1 exactly inside the true anomaly region, 0 elsewhere.
    fn oracle_map(masks: &crate::volumes::MaskSet, label: &CaseLabel) -> ErrorMap {
        let dims = masks.dims;
        let mut values = vec![0.0f32; dims.count()];
        if label.bleeding_left {
            for (i, &m) in masks.hemisphere_left.iter().enumerate() {
                if m {
                    values[i] = 1.0;
                }
            }
        }
        if label.bleeding_right {
            for (i, &m) in masks.hemisphere_right.iter().enumerate() {
                if m {
                    values[i] = 1.0;
                }
            }
        }
        if label.fracture {
            for (i, &m) in masks.skull.iter().enumerate() {
                if m {
                    values[i] = 1.0;
                }
            }
        }
        ErrorMap::new(dims, values).unwrap()
    }

    #[test]
    fn oracle_maps_reach_perfect_auroc() {
        let specs = [
            (0u64, Anomaly::None),
            (1, Anomaly::BlobLeft),
            (2, Anomaly::BlobRight),
            (3, Anomaly::ShellBreak),
            (4, Anomaly::None),
        ];
        let cases_data: Vec<_> = specs
            .iter()
            .map(|&(seed, a)| phantom_case(seed, a))
            .collect();
        let maps: Vec<CaseMaps> = cases_data
            .iter()
            .enumerate()
            .map(|(i, (masks, label))| CaseMaps {
                case_id: format!("case{i}"),
                map: oracle_map(masks, label),
                masks,
                labels: *label,
            })
            .collect();
        let res = evaluate_from_maps(&maps, NetworkKind::Ppr, &EvalOptions::default()).unwrap();
        assert_eq!(res.ich.auroc, 1.0);
        assert_eq!(res.fracture.auroc, 1.0);
    }

    #[test]
    fn random_maps_hover_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut cases_data = Vec::new();
        for i in 0..40u64 {
            let anomaly = match i % 4 {
                0 => Anomaly::None,
                1 => Anomaly::BlobLeft,
                2 => Anomaly::BlobRight,
                _ => Anomaly::ShellBreak,
            };
            cases_data.push(phantom_case(i, anomaly));
        }
        let maps: Vec<CaseMaps> = cases_data
            .iter()
            .enumerate()
            .map(|(i, (masks, label))| {
                let dims: Dims = masks.dims;
                let values: Vec<f32> = (0..dims.count()).map(|_| rng.random()).collect();
                CaseMaps {
                    case_id: format!("case{i}"),
                    map: ErrorMap::new(dims, values).unwrap(),
                    masks,
                    labels: *label,
                }
            })
            .collect();
        let res = evaluate_from_maps(&maps, NetworkKind::Ppr, &EvalOptions::default()).unwrap();
        assert!(
            (0.35..=0.65).contains(&res.ich.auroc),
            "ich {}",
            res.ich.auroc
        );
        assert!(
            (0.35..=0.65).contains(&res.fracture.auroc),
            "fracture {}",
            res.fracture.auroc
        );
    }

    #[test]
    fn pooling_is_invariant_to_case_order() {
        let specs = [
            (10u64, Anomaly::BlobLeft),
            (11, Anomaly::None),
            (12, Anomaly::BlobRight),
            (13, Anomaly::ShellBreak),
        ];
        let cases_data: Vec<_> = specs
            .iter()
            .map(|&(seed, a)| phantom_case(seed, a))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy_maps: Vec<ErrorMap> = cases_data
            .iter()
            .map(|(masks, label)| {
                let mut m = oracle_map(masks, label);
                for v in m.values.iter_mut() {
                    *v += 0.3 * rng.random::<f32>();
                }
                m
            })
            .collect();
        let build = |order: &[usize]| -> f64 {
            let maps: Vec<CaseMaps> = order
                .iter()
                .map(|&i| CaseMaps {
                    case_id: format!("case{i}"),
                    map: noisy_maps[i].clone(),
                    masks: &cases_data[i].0,
                    labels: cases_data[i].1,
                })
                .collect();
            evaluate_from_maps(&maps, NetworkKind::Ppr, &EvalOptions::default())
                .unwrap()
                .ich
                .auroc
        };
        assert_eq!(build(&[0, 1, 2, 3]), build(&[3, 2, 1, 0]));
    }
}
