//! Fleiss' kappa and rater-versus-majority agreement.

use super::roc::pairwise_auroc;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Chance-corrected agreement for a fixed rater count over categorical
/// items. `ratings` is an items x categories count matrix; every row must
/// sum to `n_raters`.
pub fn fleiss_kappa(ratings: &[Vec<usize>], n_raters: usize) -> Result<f64> {
    if n_raters < 2 {
        return Err(Error::Config("fleiss_kappa needs at least 2 raters".into()));
    }
    if ratings.len() < 2 {
        return Err(Error::Config("fleiss_kappa needs at least 2 items".into()));
    }
    let n_cats = ratings[0].len();
    if n_cats < 1 {
        return Err(Error::Config("fleiss_kappa needs at least one category".into()));
    }
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != n_cats {
            return Err(Error::Config(format!(
                "item {i} has {} categories, expected {n_cats}",
                row.len()
            )));
        }
        let sum: usize = row.iter().sum();
        if sum != n_raters {
            return Err(Error::Config(format!(
                "item {i} counts sum to {sum}, expected {n_raters}"
            )));
        }
    }

    let n_items = ratings.len() as f64;
    let n = n_raters as f64;

    // Per-item observed agreement.
    let p_bar: f64 = ratings
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|&c| c * c).sum();
            (sq as f64 - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / n_items;

    // Chance agreement from the marginal category proportions.
    let p_e: f64 = (0..n_cats)
        .map(|j| {
            let col: usize = ratings.iter().map(|row| row[j]).sum();
            let p = col as f64 / (n_items * n);
            p * p
        })
        .sum();

    let denom = 1.0 - p_e;
    if denom == 0.0 {
        return Err(Error::Evaluation(
            "kappa undefined: all ratings fall in one category".into(),
        ));
    }
    Ok((p_bar - p_e) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    BleedingLeft,
    BleedingRight,
    Fracture,
}

impl Feature {
    pub const ALL: [Feature; 3] = [
        Feature::BleedingLeft,
        Feature::BleedingRight,
        Feature::Fracture,
    ];

    fn index(&self) -> usize {
        match self {
            Feature::BleedingLeft => 0,
            Feature::BleedingRight => 1,
            Feature::Fracture => 2,
        }
    }
}

/// Three raters' boolean findings per case and feature.
#[derive(Debug, Clone, Default)]
pub struct RaterTable {
    /// cases[case][feature][rater]
    pub cases: Vec<[[bool; 3]; 3]>,
}

impl RaterTable {
    pub fn majority(&self, case: usize, feature: Feature) -> bool {
        let votes = self.cases[case][feature.index()];
        votes.iter().filter(|&&v| v).count() >= 2
    }

    /// Items x 2 count matrix (true/false votes) for one feature.
    pub fn counts(&self, feature: Feature) -> Vec<Vec<usize>> {
        self.cases
            .iter()
            .map(|c| {
                let yes = c[feature.index()].iter().filter(|&&v| v).count();
                vec![yes, 3 - yes]
            })
            .collect()
    }
}

/// Each rater's boolean treated as a 0/1 score against the majority vote;
/// returns the three AUROCs and their mean.
pub fn rater_vs_majority(table: &RaterTable, feature: Feature) -> Result<([f64; 3], f64)> {
    let majority: Vec<bool> = (0..table.cases.len())
        .map(|i| table.majority(i, feature))
        .collect();
    let mut aurocs = [0.0f64; 3];
    for rater in 0..3 {
        let scores: Vec<f64> = table
            .cases
            .iter()
            .map(|c| c[feature.index()][rater] as u8 as f64)
            .collect();
        aurocs[rater] = pairwise_auroc(&scores, &majority)?;
    }
    let avg = aurocs.iter().sum::<f64>() / 3.0;
    Ok((aurocs, avg))
}
