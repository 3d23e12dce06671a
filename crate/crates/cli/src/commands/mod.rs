pub mod eval;
pub mod gen_data;
pub mod infer;
pub mod report;
pub mod sweep;
pub mod train;

use ppr_core::evaluation::Aggregator;
use ppr_core::Result;

/// Parses "max", "mean" or "pNN" (nearest-rank percentile).
pub fn parse_aggregator(s: &str) -> Result<Aggregator> {
    match s {
        "max" => Ok(Aggregator::Max),
        "mean" => Ok(Aggregator::Mean),
        _ => {
            if let Some(q) = s.strip_prefix('p') {
                let q: f64 = q.parse().map_err(|_| {
                    ppr_core::Error::Config(format!("bad aggregator \"{s}\""))
                })?;
                if q > 0.0 && q <= 100.0 {
                    return Ok(Aggregator::Percentile(q));
                }
            }
            Err(ppr_core::Error::Config(format!(
                "bad aggregator \"{s}\" (expected max, mean or pNN)"
            )))
        }
    }
}
