//! Detection metrics: confusion counts, precision / recall / F1 / accuracy /
//! FPR, ROC-AUC by trapezoidal integration over score thresholds, and the
//! absolute change rate used to compare clean and attacked runs.
//!
//! Malicious is the positive class throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{ScoredEntity, Verdict};
use crate::error::{Error, Result};
use crate::graph::Label;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub total: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub precision: f64,
    /// False when precision was undefined (no positive verdicts) and
    /// reported as 0.
    pub precision_defined: bool,
    pub recall: f64,
    pub recall_defined: bool,
    pub f1: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub fpr_defined: bool,
    /// Absent when ground truth has no positives or no negatives.
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

impl EvalReport {
    pub fn summary_line(&self) -> String {
        format!(
            "P={:.4} R={:.4} F1={:.4} Acc={:.4} FPR={:.4} AUC={} (TP={} FP={} FN={} TN={})",
            self.precision,
            self.recall,
            self.f1,
            self.accuracy,
            self.fpr,
            self.auc
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}")),
            self.true_pos,
            self.false_pos,
            self.false_neg,
            self.true_neg
        )
    }
}

/// Compute the report from per-entity verdicts, ground truth, and scores.
/// Every scored id must be present in the truth map.
pub fn compute_metrics(
    scored: &[ScoredEntity],
    truth: &BTreeMap<String, Label>,
) -> Result<EvalReport> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut ranked: Vec<(f64, bool)> = Vec::with_capacity(scored.len());
    for s in scored {
        let label = truth.get(&s.id).ok_or_else(|| {
            Error::Data(format!("entity {} has no ground-truth label", s.id))
        })?;
        let positive = *label == Label::Malicious;
        match (s.verdict, positive) {
            (Verdict::Anomalous, true) => tp += 1,
            (Verdict::Anomalous, false) => fp += 1,
            (Verdict::Benign, true) => fn_ += 1,
            (Verdict::Benign, false) => tn += 1,
        }
        ranked.push((s.normalized, positive));
    }
    let total = scored.len();
    let (precision, precision_defined) = ratio(tp, tp + fp);
    let (recall, recall_defined) = ratio(tp, tp + fn_);
    let (fpr, fpr_defined) = ratio(fp, fp + tn);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let accuracy = if total > 0 {
        (tp + tn) as f64 / total as f64
    } else {
        0.0
    };
    let (auc, roc) = roc_auc(&mut ranked);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        total,
        true_pos: tp,
        false_pos: fp,
        false_neg: fn_,
        true_neg: tn,
        precision,
        precision_defined,
        recall,
        recall_defined,
        f1,
        accuracy,
        fpr,
        fpr_defined,
        auc,
        roc,
    })
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// ROC points at every distinct score threshold (descending) and the
/// trapezoidal AUC. Ties advance TP and FP together, which makes the
/// trapezoid rule agree with the pair-counting definition exactly.
fn roc_auc(ranked: &mut [(f64, bool)]) -> (Option<f64>, Vec<RocPoint>) {
    let pos = ranked.iter().filter(|(_, p)| *p).count();
    let neg = ranked.len() - pos;
    if pos == 0 || neg == 0 {
        return (None, Vec::new());
    }
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut roc = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    // pair-count accumulator: Σ ΔFP·TP_prev + ΔFP·ΔTP/2
    let mut weighted = 0.0f64;
    let mut i = 0;
    while i < ranked.len() {
        let threshold = ranked[i].0;
        let mut d_tp = 0usize;
        let mut d_fp = 0usize;
        while i < ranked.len() && ranked[i].0 == threshold {
            if ranked[i].1 {
                d_tp += 1;
            } else {
                d_fp += 1;
            }
            i += 1;
        }
        weighted += (d_fp * tp) as f64 + (d_fp * d_tp) as f64 / 2.0;
        tp += d_tp;
        fp += d_fp;
        roc.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    // Each negative contributes one pair per positive that outranked it,
    // plus half a pair per tie, so `weighted` is exactly AUC · P · N.
    let auc = weighted / (pos * neg) as f64;
    (Some(auc), roc)
}

/// Absolute change rate of a metric between a clean and an attacked run:
/// |attacked − clean| / clean. Undefined when the clean value is zero.
pub fn acr(clean: f64, attacked: f64) -> Option<f64> {
    if clean == 0.0 {
        None
    } else {
        Some((attacked - clean).abs() / clean)
    }
}
