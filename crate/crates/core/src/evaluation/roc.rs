//! ROC curves and AUROC.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        out
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("ROC scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Evaluation(
            "ROC needs both classes present".into(),
        ));
    }
    Ok((pos, neg))
}

/// Sweeps thresholds over the unique scores (descending). The curve runs
/// from (0,0) to (1,1); AUROC is the trapezoid area under it.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }

    let mut auroc = 0.0;
    for w in points.windows(2) {
        auroc += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    Ok(RocCurve { points, auroc })
}

/// Rank statistic: P(score+ > score-) + 0.5 P(tie), computed from average
/// ranks. Agrees with the trapezoid area to floating-point accuracy.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Average ranks over tie groups (1-based).
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfectly_separated_scores() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(curve.auroc, 1.0);
        assert_eq!(curve.points.first().unwrap().fpr, 0.0);
        assert_eq!(curve.points.last().unwrap().tpr, 1.0);
    }

    #[test]
    fn all_ties_give_half() {
        let scores = [0.5; 6];
        let labels = [true, false, true, false, true, false];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(curve.auroc, 0.5);
        assert_eq!(pairwise_auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn hand_case_three_of_four_pairs() {
        // Pairs: (0.35 vs 0.1) win, (0.35 vs 0.4) loss, (0.8 vs both) wins.
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert!((curve.auroc - 0.75).abs() < 1e-12);
        assert!((pairwise_auroc(&scores, &labels).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_equals_rank_statistic_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..300 {
            let n = rng.random_range(4..40);
            // Coarse grid scores force plenty of ties.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..8) as f64) / 8.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_curve(&scores, &labels).unwrap().auroc;
            let b = pairwise_auroc(&scores, &labels).unwrap();
            assert!((a - b).abs() < 1e-9, "trapezoid {a} vs pairwise {b}");
        }
    }

    #[test]
    fn single_class_is_evaluation_error() {
        let scores = [0.5, 0.7];
        assert!(roc_curve(&scores, &[true, true]).is_err());
        assert!(roc_curve(&scores, &[false, false]).is_err());
    }

    #[test]
    fn curve_is_monotone_with_unit_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let scores: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let mut labels: Vec<bool> = (0..50).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let curve = roc_curve(&scores, &labels).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
        }
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }
}
