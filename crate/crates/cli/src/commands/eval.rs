//! `ppr eval`: ROC curves, AUROC summaries and plots for both detection
//! tasks on the test split.

use crate::runconfig;
use clap::Args;
use ppr_core::evaluation::{evaluate_tasks, EvalOptions, TaskResults};
use ppr_core::pipeline::load_trained;
use ppr_core::reporting::{self, MetricsSummary, Series};
use ppr_core::volumes::{load_dataset, Split};
use ppr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Structure-score aggregator: max, mean or pNN.
    #[arg(long, default_value = "p99")]
    agg: String,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Apply the reconstruction post-filters to regressor maps as well.
    #[arg(long)]
    filter_ppr: bool,
    #[arg(long, default_value_t = 5)]
    filter_k: usize,
    /// When given, must match the checkpoint's patch size.
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResolvedEval {
    ckpt: PathBuf,
    data: PathBuf,
    agg: String,
    stride: usize,
    filter_ppr: bool,
    filter_k: usize,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let agg = super::parse_aggregator(&args.agg)?;
    let (spec, net, store) = load_trained(&args.ckpt)?;
    if let Some(p) = args.patch_size {
        if p != spec.input_side {
            return Err(Error::Config(format!(
                "requested patch size {p} but checkpoint was trained at {}",
                spec.input_side
            )));
        }
    }
    crate::prepare_out_dir(&args.out, args.force)?;
    let cases = load_dataset(&args.data, Some(Split::Test))?;
    let refs: Vec<&_> = cases.iter().collect();
    let opts = EvalOptions {
        agg,
        stride: args.stride,
        filter_ppr: args.filter_ppr,
        filter_k: args.filter_k,
    };
    let results = evaluate_tasks(&net, &store, spec.kind, &refs, &opts)?;

    let filter_desc = |task: &str| -> String {
        match spec.kind {
            ppr_core::models::NetworkKind::Ae => match task {
                "ich" => format!("grey_erosion k={}", args.filter_k),
                _ => format!("median k={}", args.filter_k),
            },
            ppr_core::models::NetworkKind::Ppr if args.filter_ppr => match task {
                "ich" => format!("grey_erosion k={}", args.filter_k),
                _ => format!("median k={}", args.filter_k),
            },
            _ => "none".to_string(),
        }
    };
    write_outputs(&args.out, &results, &args.agg, &filter_desc)?;
    runconfig::persist(
        &args.out,
        &ResolvedEval {
            ckpt: args.ckpt.clone(),
            data: args.data.clone(),
            agg: args.agg.clone(),
            stride: args.stride,
            filter_ppr: args.filter_ppr,
            filter_k: args.filter_k,
        },
    )?;
    println!(
        "ich auroc {:.4}  fracture auroc {:.4}",
        results.ich.auroc, results.fracture.auroc
    );
    Ok(())
}

pub fn write_outputs(
    out: &Path,
    results: &TaskResults,
    agg: &str,
    filter_desc: &dyn Fn(&str) -> String,
) -> Result<()> {
    let class_counts = |samples: &[ppr_core::evaluation::StructureScore]| {
        let pos = samples.iter().filter(|s| s.label).count();
        (pos, samples.len() - pos)
    };
    let (ich_pos, ich_neg) = class_counts(&results.ich_scores);
    let (fr_pos, fr_neg) = class_counts(&results.fracture_scores);
    let metrics = vec![
        MetricsSummary {
            task: "ich".into(),
            auroc: results.ich.auroc,
            n_pos: ich_pos,
            n_neg: ich_neg,
            aggregator: agg.to_string(),
            filter: filter_desc("ich"),
        },
        MetricsSummary {
            task: "fracture".into(),
            auroc: results.fracture.auroc,
            n_pos: fr_pos,
            n_neg: fr_neg,
            aggregator: agg.to_string(),
            filter: filter_desc("fracture"),
        },
    ];
    reporting::write_metrics_json(&out.join("metrics.json"), &metrics)?;

    for (task, curve) in [("ich", &results.ich), ("fracture", &results.fracture)] {
        reporting::write_text(&out.join(format!("roc_{task}.csv")), &curve.to_csv())?;
        let svg = reporting::svg_line_plot(
            &format!("ROC {} (AUROC {:.3})", task, curve.auroc),
            "false positive rate",
            "true positive rate",
            (0.0, 1.0),
            (0.0, 1.0),
            &[Series {
                label: task,
                points: curve.points.iter().map(|p| (p.fpr, p.tpr)).collect(),
            }],
            true,
        );
        reporting::write_text(&out.join(format!("roc_{task}.svg")), &svg)?;
    }

    // Raw structure scores for downstream analysis.
    let mut csv = String::from("case,structure,score,label\n");
    for s in results.ich_scores.iter().chain(&results.fracture_scores) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            s.case_id, s.structure, s.score, s.label as u8
        ));
    }
    reporting::write_text(&out.join("structure_scores.csv"), &csv)?;
    Ok(())
}
