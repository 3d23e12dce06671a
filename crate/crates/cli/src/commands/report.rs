//! `ppr report`: consolidate metrics, parameter counts and memory estimates
//! of several runs into one comparison table.

use clap::Args;
use ppr_core::diffcore::load_checkpoint;
use ppr_core::models::{count_params, estimate_memory, NetworkKind, NetworkSpec};
use ppr_core::reporting::{read_metrics_json, render_aligned_table, write_text};
use ppr_core::{Error, Result};
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories (each holding metrics.json and/or model.pprc).
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

struct RunRow {
    run: String,
    kind: String,
    m: String,
    params: String,
    memory_mb: String,
    auroc_ich: String,
    auroc_fracture: String,
}

pub fn run(args: ReportArgs) -> Result<()> {
    crate::prepare_out_dir(&args.out, args.force)?;
    let mut rows = Vec::new();
    for run in &args.runs {
        if !run.exists() {
            return Err(Error::Config(format!("run directory {} not found", run.display())));
        }
        let mut row = RunRow {
            run: run
                .file_name()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| run.display().to_string()),
            kind: "-".into(),
            m: "-".into(),
            params: "-".into(),
            memory_mb: "-".into(),
            auroc_ich: "-".into(),
            auroc_fracture: "-".into(),
        };
        let ckpt = run.join("model.pprc");
        if ckpt.exists() {
            let (header, _) = load_checkpoint(&ckpt)?;
            let kind = match header.kind.as_str() {
                "ppr" => NetworkKind::Ppr,
                _ => NetworkKind::Ae,
            };
            let spec = NetworkSpec {
                kind,
                m: header.m,
                input_side: header.input_side,
                block_variant: header.block_variant.clone(),
                layers: header.layers.clone(),
            };
            // Memory at the experiment batch sizes: 256 patches or 4 volumes.
            let batch = match kind {
                NetworkKind::Ppr => 256,
                NetworkKind::Ae => 4,
            };
            let est = estimate_memory(&spec, batch, 4);
            row.kind = header.kind.clone();
            row.m = header.m.to_string();
            row.params = count_params(&spec).to_string();
            row.memory_mb = format!("{:.1}", est.total_bytes() as f64 / (1024.0 * 1024.0));
        }
        let metrics = run.join("metrics.json");
        if metrics.exists() {
            for m in read_metrics_json(&metrics)? {
                match m.task.as_str() {
                    "ich" => row.auroc_ich = format!("{:.4}", m.auroc),
                    "fracture" => row.auroc_fracture = format!("{:.4}", m.auroc),
                    _ => {}
                }
            }
        }
        rows.push(row);
    }

    let header = ["run", "kind", "m", "params", "memory_mb", "auroc_ich", "auroc_fracture"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.run.clone(),
                r.kind.clone(),
                r.m.clone(),
                r.params.clone(),
                r.memory_mb.clone(),
                r.auroc_ich.clone(),
                r.auroc_fracture.clone(),
            ]
        })
        .collect();

    let mut csv = String::from("run,kind,m,params,memory_mb,auroc_ich,auroc_fracture\n");
    for r in &cells {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    write_text(&args.out.join("comparison.csv"), &csv)?;
    let table = render_aligned_table(&header, &cells);
    write_text(&args.out.join("comparison.txt"), &table)?;
    print!("{table}");
    Ok(())
}
