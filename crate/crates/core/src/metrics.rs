//! OOS detection metrics (OOS is the positive class, higher score = more
//! OOS-like), intent accuracy and embedding dispersion.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::featurizer::AsQuery;
use crate::linalg::{global_covariance_trace, Matrix};
use crate::scalar::Scalar;
use crate::scorer::FittedScorer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub score: f64,
    pub is_oos: bool,
    pub true_intent: Option<usize>,
    pub predicted_intent: Option<usize>,
}

impl ScoredLabel {
    pub fn new(score: f64, is_oos: bool) -> Self {
        Self {
            score,
            is_oos,
            true_intent: None,
            predicted_intent: None,
        }
    }
}

fn check_scores(items: &[ScoredLabel]) -> Result<()> {
    if items.iter().any(|i| i.score.is_nan()) {
        return Err(Error::non_finite("scores (NaN)"));
    }
    Ok(())
}

/// Items grouped by equal score, highest score first, as `(oos, in_scope)` counts.
fn tie_groups_descending(items: &[ScoredLabel]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&ScoredLabel> = items.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].score;
        let (mut pos, mut neg) = (0, 0);
        while i < sorted.len() && sorted[i].score == v {
            if sorted[i].is_oos {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        groups.push((pos, neg));
    }
    groups
}

/// Average precision: the sum over tie groups of precision times the recall
/// increment, each group treated as one threshold.
pub fn aupr_oos(items: &[ScoredLabel]) -> Result<f64> {
    check_scores(items)?;
    let n_oos = items.iter().filter(|i| i.is_oos).count();
    if n_oos == 0 {
        return Err(Error::InvalidData("AUPR needs at least one OOS item".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (pos, neg) in tie_groups_descending(items) {
        tp += pos;
        seen += pos + neg;
        let precision = tp as f64 / seen as f64;
        let recall = tp as f64 / n_oos as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mann-Whitney AUROC: probability that an OOS item outscores an in-scope
/// one, ties counting one half.
pub fn auroc(items: &[ScoredLabel]) -> Result<f64> {
    check_scores(items)?;
    let n_oos = items.iter().filter(|i| i.is_oos).count() as u64;
    let n_is = items.len() as u64 - n_oos;
    if n_oos == 0 || n_is == 0 {
        return Err(Error::InvalidData("AUROC needs both OOS and in-scope items".into()));
    }
    // Ascending order: each OOS group gains 2 per in-scope item below and 1 per tie.
    let mut groups = tie_groups_descending(items);
    groups.reverse();
    let mut below = 0u64;
    let mut twice_wins = 0u64;
    for (pos, neg) in groups {
        twice_wins += pos as u64 * (2 * below + neg as u64);
        below += neg as u64;
    }
    Ok(twice_wins as f64 / (2 * n_oos * n_is) as f64)
}

/// Fraction of in-scope items whose predicted intent is correct.
pub fn intent_accuracy(items: &[ScoredLabel]) -> Result<f64> {
    let mut n = 0usize;
    let mut correct = 0usize;
    for (i, item) in items.iter().enumerate().filter(|(_, i)| !i.is_oos) {
        match (item.true_intent, item.predicted_intent) {
            (Some(t), Some(p)) => {
                n += 1;
                correct += usize::from(t == p);
            }
            _ => {
                return Err(Error::InvalidData(format!(
                    "in-scope item {i} lacks a true or predicted intent"
                )))
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidData("intent accuracy needs at least one in-scope item".into()));
    }
    Ok(correct as f64 / n as f64)
}

/// Trace of the global covariance (single mean, `1/N`).
pub fn dispersion<T: Scalar>(embeddings: &Matrix<T>) -> Result<f64> {
    global_covariance_trace(embeddings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub aupr_oos: f64,
    pub auroc: f64,
    pub intent_accuracy: f64,
    pub dispersion: f64,
    pub n_is: usize,
    pub n_oos: usize,
    pub tau: Option<f64>,
}

impl EvaluationReport {
    /// `key=value` lines in JSON key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "aupr_oos={}", self.aupr_oos);
        let _ = writeln!(s, "auroc={}", self.auroc);
        let _ = writeln!(s, "intent_accuracy={}", self.intent_accuracy);
        let _ = writeln!(s, "dispersion={}", self.dispersion);
        let _ = writeln!(s, "n_is={}", self.n_is);
        let _ = writeln!(s, "n_oos={}", self.n_oos);
        match self.tau {
            Some(t) => {
                let _ = writeln!(s, "tau={t}");
            }
            None => s.push_str("tau=none\n"),
        }
        s
    }
}

/// Scores the test set and assembles every metric. Dispersion is measured on
/// the in-scope test embeddings.
pub fn evaluate<T: Scalar, X: AsQuery>(
    scorer: &FittedScorer<T>,
    test: &[Example<X>],
    tau: Option<f64>,
) -> Result<EvaluationReport> {
    let n_oos = test.iter().filter(|e| e.label.is_oos()).count();
    let n_is = test.len() - n_oos;
    if n_oos == 0 || n_is == 0 {
        return Err(Error::InvalidData(format!(
            "evaluation needs both in-scope and OOS test examples (got {n_is} in-scope, {n_oos} OOS)"
        )));
    }
    let mut data = Vec::with_capacity(test.len() * scorer.featurizer.dim);
    for e in test {
        data.extend(scorer.featurizer.features::<T>(e.input.as_query())?);
    }
    let embeddings = scorer.embed(&Matrix::from_vec(test.len(), scorer.featurizer.dim, data)?)?;
    let results = scorer.score_embeddings(&embeddings)?;
    let items: Vec<ScoredLabel> = results
        .iter()
        .zip(test)
        .map(|(r, e)| ScoredLabel {
            score: r.d_min,
            is_oos: e.label.is_oos(),
            true_intent: e.label.intent(),
            predicted_intent: Some(r.c_min),
        })
        .collect();
    let in_scope_rows: Vec<usize> = (0..test.len()).filter(|&i| !test[i].label.is_oos()).collect();
    Ok(EvaluationReport {
        aupr_oos: aupr_oos(&items)?,
        auroc: auroc(&items)?,
        intent_accuracy: intent_accuracy(&items)?,
        dispersion: dispersion(&embeddings.select_rows(&in_scope_rows))?,
        n_is,
        n_oos,
        tau,
    })
}

/// Exhaustive reference implementations used to check the metrics above.
pub mod oracle {
    use super::ScoredLabel;
    use crate::error::{Error, Result};

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct PrPoint {
        pub threshold: f64,
        pub precision: f64,
        pub recall: f64,
    }

    /// Precision and recall of the rule `score >= t` for every distinct score
    /// `t`, highest threshold first, each counted by a full scan.
    pub fn brute_force_pr_curve(items: &[ScoredLabel]) -> Result<Vec<PrPoint>> {
        let n_oos = items.iter().filter(|i| i.is_oos).count();
        if n_oos == 0 {
            return Err(Error::InvalidData("PR curve needs at least one OOS item".into()));
        }
        let mut thresholds: Vec<f64> = items.iter().map(|i| i.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        Ok(thresholds
            .into_iter()
            .map(|t| {
                let flagged = items.iter().filter(|i| i.score >= t).count();
                let tp = items.iter().filter(|i| i.score >= t && i.is_oos).count();
                PrPoint {
                    threshold: t,
                    precision: tp as f64 / flagged as f64,
                    recall: tp as f64 / n_oos as f64,
                }
            })
            .collect())
    }

    /// Step-wise area under a PR curve ordered by decreasing threshold.
    pub fn average_precision(curve: &[PrPoint]) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in curve {
            ap += p.precision * (p.recall - prev);
            prev = p.recall;
        }
        ap
    }

    /// AUROC by comparing every (OOS, in-scope) pair.
    pub fn pairwise_auroc(items: &[ScoredLabel]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for p in items.iter().filter(|i| i.is_oos) {
            for n in items.iter().filter(|i| !i.is_oos) {
                pairs += 1;
                twice += if p.score > n.score {
                    2
                } else if p.score == n.score {
                    1
                } else {
                    0
                };
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    /// Trapezoidal area under the ROC curve traced over all thresholds.
    pub fn trapezoid_auroc(items: &[ScoredLabel]) -> f64 {
        let n_pos = items.iter().filter(|i| i.is_oos).count() as f64;
        let n_neg = items.len() as f64 - n_pos;
        let mut thresholds: Vec<f64> = items.iter().map(|i| i.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let (mut fpr0, mut tpr0) = (0.0, 0.0);
        let mut area = 0.0;
        for t in thresholds {
            let tp = items.iter().filter(|i| i.score >= t && i.is_oos).count() as f64;
            let fp = items.iter().filter(|i| i.score >= t && !i.is_oos).count() as f64;
            let (fpr, tpr) = (fp / n_neg, tp / n_pos);
            area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
            fpr0 = fpr;
            tpr0 = tpr;
        }
        area
    }
}
