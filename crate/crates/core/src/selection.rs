//! Turning inclusion probabilities into selections and scoring them.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "rule")]
pub enum SelectionRule {
    MedianProbability,
    BayesFdr { alpha: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionResult {
    pub selected: Vec<bool>,
    pub rule: SelectionRule,
    /// Selection is exactly { j : ppi[j] ≥ implicit_threshold }; a sentinel
    /// just above 1 encodes an empty selection.
    pub implicit_threshold: f64,
    pub ppi_used: Vec<f64>,
}

impl SelectionResult {
    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len())
            .filter(|&j| self.selected[j])
            .collect()
    }
}

/// Median-probability model: keep everything with qPPI ≥ 0.5.
pub fn select_median(ppi: &[f64]) -> SelectionResult {
    let threshold = 0.5;
    SelectionResult {
        selected: ppi.iter().map(|&v| v >= threshold).collect(),
        rule: SelectionRule::MedianProbability,
        implicit_threshold: threshold,
        ppi_used: ppi.to_vec(),
    }
}

/// Bayesian-FDR rule: order the qPPIs decreasingly and keep the largest
/// prefix whose running mean stays at or above 1 − α; the smallest kept value
/// becomes the threshold. Equal values at the boundary are kept (ties break
/// toward inclusion).
pub fn select_bfdr(ppi: &[f64], alpha: f64) -> SelectionResult {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let mut order: Vec<usize> = (0..ppi.len()).collect();
    order.sort_by(|&a, &b| ppi[b].total_cmp(&ppi[a]).then(a.cmp(&b)));
    let mut running = 0.0;
    let mut threshold = f64::NAN;
    for (rank, &j) in order.iter().enumerate() {
        running += ppi[j];
        if running / (rank + 1) as f64 >= 1.0 - alpha {
            threshold = ppi[j];
        }
    }
    if threshold.is_nan() {
        // Nothing qualifies; the sentinel sits above every probability.
        threshold = 1.0 + f64::EPSILON;
    }
    SelectionResult {
        selected: ppi.iter().map(|&v| v >= threshold).collect(),
        rule: SelectionRule::BayesFdr { alpha },
        implicit_threshold: threshold,
        ppi_used: ppi.to_vec(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SelectionMetrics {
    pub fdr: f64,
    pub power: f64,
    pub f1: f64,
    pub mcc: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

/// Confusion counts and rates over the scored columns only (the mask usually
/// excludes forced-in columns such as the intercept). Degenerate denominators
/// use the conventions FDR = 0, Power = 1, F1 = 1, MCC = 0.
pub fn score_selection(
    selected: &[bool],
    truth: &[bool],
    scored_mask: &[bool],
) -> Result<SelectionMetrics> {
    if selected.len() != truth.len() || truth.len() != scored_mask.len() {
        return Err(Error::LengthMismatch {
            context: format!(
                "selected/truth/mask have lengths {}/{}/{}",
                selected.len(),
                truth.len(),
                scored_mask.len()
            ),
        });
    }
    let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..selected.len() {
        if !scored_mask[j] {
            continue;
        }
        match (selected[j], truth[j]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fne += 1,
        }
    }
    let fdr = if tp + fp == 0 {
        0.0
    } else {
        fp as f64 / (tp + fp) as f64
    };
    let power = if tp + fne == 0 {
        1.0
    } else {
        tp as f64 / (tp + fne) as f64
    };
    let f1 = if 2 * tp + fp + fne == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    };
    let denom = [(tp + fp), (tp + fne), (tn + fp), (tn + fne)];
    let mcc = if denom.iter().any(|&d| d == 0) {
        0.0
    } else {
        let num = tp as f64 * tn as f64 - fp as f64 * fne as f64;
        num / denom.iter().map(|&d| d as f64).product::<f64>().sqrt()
    };
    Ok(SelectionMetrics {
        fdr,
        power,
        f1,
        mcc,
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fne,
    })
}
