//! Minimum-Mahalanobis scoring, thresholded decisions and threshold calibration.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Example, Label, LabelMap};
use crate::error::{Error, Result};
use crate::featurizer::{encode, AsQuery, EncoderConfig, Featurizer, Query};
use crate::linalg::{ClassStatistics, Matrix};
use crate::nn::DenseNetwork;
use crate::scalar::Scalar;

/// Fewest in-scope validation distances accepted by the recall policy.
pub const MIN_RECALL_CALIBRATION: usize = 20;

/// Frozen encoder plus class statistics: everything needed at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScorer<T> {
    pub featurizer: Featurizer,
    pub encoder_config: EncoderConfig,
    pub encoder: DenseNetwork<T>,
    pub statistics: ClassStatistics<T>,
    pub labels: LabelMap,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult {
    pub d_min: f64,
    pub c_min: usize,
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    InScope,
    Oos,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::InScope => "in-scope",
            Verdict::Oos => "oos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub verdict: Verdict,
    /// Set iff the verdict is in-scope.
    pub intent: Option<usize>,
    pub score: f64,
    pub threshold: f64,
}

/// Index and value of the smallest distance; ties go to the lowest index.
pub fn argmin(distances: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &d) in distances.iter().enumerate() {
        match best {
            Some((_, b)) if !(d < b) => {}
            _ => best = Some((j, d)),
        }
    }
    best
}

/// In-scope iff `d_min <= tau`.
pub fn decide(result: &ScoreResult, tau: f64) -> Decision {
    let in_scope = result.d_min <= tau;
    Decision {
        verdict: if in_scope { Verdict::InScope } else { Verdict::Oos },
        intent: in_scope.then_some(result.c_min),
        score: result.d_min,
        threshold: tau,
    }
}

impl<T: Scalar> FittedScorer<T> {
    pub fn new(
        featurizer: Featurizer,
        encoder_config: EncoderConfig,
        encoder: DenseNetwork<T>,
        statistics: ClassStatistics<T>,
        labels: LabelMap,
    ) -> Result<Self> {
        let scorer = Self {
            featurizer,
            encoder_config,
            encoder,
            statistics,
            labels,
            tau: None,
        };
        scorer.validate()?;
        Ok(scorer)
    }

    pub fn validate(&self) -> Result<()> {
        let mismatch = |expected, actual, context| Err(Error::DimensionMismatch { expected, actual, context });
        if self.featurizer.dim != self.encoder_config.feature_dim {
            return mismatch(self.encoder_config.feature_dim, self.featurizer.dim, "featurizer output vs encoder input");
        }
        if self.encoder.input_dim() != self.encoder_config.feature_dim
            || self.encoder.output_dim() != self.encoder_config.embedding_dim
        {
            return mismatch(self.encoder_config.embedding_dim, self.encoder.output_dim(), "encoder vs its config");
        }
        if self.statistics.dim() != self.encoder.output_dim() {
            return mismatch(self.encoder.output_dim(), self.statistics.dim(), "statistics vs encoder output");
        }
        if self.statistics.class_count() != self.labels.len() {
            return mismatch(self.labels.len(), self.statistics.class_count(), "label map vs class means");
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) {
                return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {tau}")));
            }
        }
        Ok(())
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = Some(tau);
        self.validate()?;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.statistics.class_count()
    }

    pub fn embedding_dim(&self) -> usize {
        self.statistics.dim()
    }

    /// Encoder output for a feature matrix.
    pub fn embed(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        encode(&self.encoder_config, &self.encoder, features)
    }

    pub fn embed_inputs<X: AsQuery>(&self, inputs: &[X]) -> Result<Matrix<T>> {
        self.embed(&self.featurizer.features_matrix(inputs)?)
    }

    /// Scores an encoder output directly.
    pub fn score_embedding(&self, embedding: &[T]) -> Result<ScoreResult> {
        let per_class: Vec<f64> = self
            .statistics
            .distances(embedding)?
            .into_iter()
            .map(Scalar::as_f64)
            .collect();
        let (c_min, d_min) = argmin(&per_class).ok_or(Error::InsufficientSamples { needed: 1, actual: 0 })?;
        Ok(ScoreResult { d_min, c_min, per_class })
    }

    pub fn score(&self, query: Query<'_>) -> Result<ScoreResult> {
        let features = Matrix::from_vec(1, self.featurizer.dim, self.featurizer.features(query)?)?;
        let embedding = self.embed(&features)?;
        self.score_embedding(embedding.row(0))
    }

    /// Scores many inputs with one encoder pass; distances are computed in parallel.
    pub fn score_batch<X: AsQuery>(&self, inputs: &[X]) -> Result<Vec<ScoreResult>> {
        let embeddings = self.embed_inputs(inputs)?;
        self.score_embeddings(&embeddings)
    }

    pub fn score_embeddings(&self, embeddings: &Matrix<T>) -> Result<Vec<ScoreResult>> {
        (0..embeddings.rows())
            .into_par_iter()
            .map(|i| self.score_embedding(embeddings.row(i)))
            .collect()
    }

    /// Score and decide against the stored threshold.
    pub fn classify(&self, query: Query<'_>) -> Result<(ScoreResult, Decision)> {
        let tau = self
            .tau
            .ok_or_else(|| Error::InvalidConfig("model has no threshold; run calibration first".into()))?;
        let result = self.score(query)?;
        let decision = decide(&result, tau);
        Ok((result, decision))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// `tau` is the r-quantile of in-scope distances.
    InScopeRecall(f64),
    /// `tau` maximizes F1 with OOS as the positive class.
    F1Oos,
}

impl Default for Policy {
    fn default() -> Self {
        Policy::InScopeRecall(0.95)
    }
}

const VALID_POLICIES: &str = "valid policies: is-recall@<r> with 0 < r <= 1 (e.g. is-recall@0.95), f1-oos";

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "f1-oos" {
            return Ok(Policy::F1Oos);
        }
        if let Some(r) = s.strip_prefix("is-recall@") {
            if let Ok(r) = r.parse::<f64>() {
                if r > 0.0 && r <= 1.0 {
                    return Ok(Policy::InScopeRecall(r));
                }
            }
        }
        Err(Error::InvalidConfig(format!("unknown policy '{s}'; {VALID_POLICIES}")))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::InScopeRecall(r) => write!(f, "is-recall@{r}"),
            Policy::F1Oos => f.write_str("f1-oos"),
        }
    }
}

/// Linear-interpolation quantile: `h = (n - 1) r`, interpolating between the
/// neighbouring order statistics.
pub fn quantile(values: &[f64], r: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * r;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Threshold from validation distances split by ground truth.
pub fn threshold_from_distances(in_scope: &[f64], oos: &[f64], policy: Policy) -> Result<f64> {
    if in_scope.iter().chain(oos).any(|d| !d.is_finite()) {
        return Err(Error::non_finite("validation distances"));
    }
    match policy {
        Policy::InScopeRecall(r) => {
            if in_scope.len() < MIN_RECALL_CALIBRATION {
                return Err(Error::InsufficientSamples {
                    needed: MIN_RECALL_CALIBRATION,
                    actual: in_scope.len(),
                });
            }
            quantile(in_scope, r)
        }
        Policy::F1Oos => best_f1_threshold(in_scope, oos),
    }
}

/// Sweeps midpoints between consecutive distinct distances; OOS is predicted
/// for `d > tau`. Ties in F1 keep the smaller threshold.
fn best_f1_threshold(in_scope: &[f64], oos: &[f64]) -> Result<f64> {
    if in_scope.is_empty() || oos.is_empty() {
        return Err(Error::InvalidData(
            "f1-oos calibration needs both in-scope and OOS validation examples".into(),
        ));
    }
    let mut items: Vec<(f64, bool)> = in_scope
        .iter()
        .map(|&d| (d, false))
        .chain(oos.iter().map(|&d| (d, true)))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_oos = oos.len();
    let n_is = in_scope.len();
    let (mut oos_below, mut is_below) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < items.len() {
        let v = items[i].0;
        while i < items.len() && items[i].0 == v {
            if items[i].1 {
                oos_below += 1;
            } else {
                is_below += 1;
            }
            i += 1;
        }
        if i == items.len() {
            break;
        }
        let tau = 0.5 * (v + items[i].0);
        let tp = (n_oos - oos_below) as f64;
        let fp = (n_is - is_below) as f64;
        let f1 = 2.0 * tp / (2.0 * tp + fp + oos_below as f64);
        if best.is_none_or(|(b, _)| f1 > b) {
            best = Some((f1, tau));
        }
    }
    best.map(|(_, tau)| tau)
        .ok_or_else(|| Error::InvalidData("f1-oos calibration needs at least two distinct distances".into()))
}

/// Scores the validation set and derives a threshold under `policy`.
pub fn calibrate_threshold<T: Scalar, X: AsQuery>(
    scorer: &FittedScorer<T>,
    validation: &[Example<X>],
    policy: Policy,
) -> Result<f64> {
    let inputs: Vec<&X> = validation.iter().map(|e| &e.input).collect();
    let features = {
        let mut data = Vec::with_capacity(inputs.len() * scorer.featurizer.dim);
        for x in &inputs {
            data.extend(scorer.featurizer.features::<T>(x.as_query())?);
        }
        Matrix::from_vec(inputs.len(), scorer.featurizer.dim, data)?
    };
    let results = scorer.score_embeddings(&scorer.embed(&features)?)?;
    let (mut is, mut oos) = (Vec::new(), Vec::new());
    for (e, r) in validation.iter().zip(&results) {
        match e.label {
            Label::Oos => oos.push(r.d_min),
            Label::InScope(_) => is.push(r.d_min),
        }
    }
    threshold_from_distances(&is, &oos, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StatisticsConfig;

    fn result(d_min: f64) -> ScoreResult {
        ScoreResult {
            d_min,
            c_min: 1,
            per_class: vec![d_min + 1.0, d_min],
        }
    }

    fn toy_scorer() -> FittedScorer<f64> {
        let emb = Matrix::from_rows(&[[-1.0, 0.0], [1.0, 0.0], [9.0, 0.0], [11.0, 0.0], [0.0, 3.0], [10.0, -3.0]]).unwrap();
        let stats = ClassStatistics::fit(&emb, &[0, 0, 1, 1, 0, 1], 2, &StatisticsConfig::default()).unwrap();
        FittedScorer::new(
            Featurizer::passthrough(2),
            EncoderConfig::identity(2),
            DenseNetwork::identity(2),
            stats,
            LabelMap::new(vec!["a".into(), "b".into()]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), Some((1, 1.0)));
        assert_eq!(argmin(&[]), None);
    }

    #[test]
    fn decision_boundary_is_inclusive() {
        assert_eq!(decide(&result(0.0), 0.0).verdict, Verdict::InScope);
        assert_eq!(decide(&result(0.1), 0.0).verdict, Verdict::Oos);
        let d = decide(&result(2.5), 2.5);
        assert_eq!((d.verdict, d.intent), (Verdict::InScope, Some(1)));
        assert_eq!(decide(&result(3.0), 2.5).intent, None);
    }

    #[test]
    fn centroid_query_scores_zero() {
        let s = toy_scorer();
        let mu1: Vec<f32> = s.statistics.means.row(1).iter().map(|&v| v as f32).collect();
        let r = s.score(Query::Embedding(&mu1)).unwrap();
        assert_eq!((r.d_min, r.c_min), (0.0, 1));
    }

    #[test]
    fn euclidean_example() {
        let stats = ClassStatistics {
            means: Matrix::from_rows(&[[0.0, 0.0], [10.0, 0.0]]).unwrap(),
            covariance: Matrix::identity(2),
            precision: Matrix::identity(2),
            ridge_used: 0.0,
        };
        let s = FittedScorer::new(
            Featurizer::passthrough(2),
            EncoderConfig::identity(2),
            DenseNetwork::identity(2),
            stats,
            LabelMap::new(vec!["a".into(), "b".into()]).unwrap(),
        )
        .unwrap();
        let r = s.score(Query::Embedding(&[1.0, 0.0])).unwrap();
        assert_eq!((r.d_min, r.c_min), (1.0, 0));
        let tie = s.score(Query::Embedding(&[5.0, 0.0])).unwrap();
        assert_eq!(tie.c_min, 0);
        assert!(matches!(
            s.score(Query::Embedding(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(s.score(Query::Text("hello")), Err(Error::TextUnavailable)));
    }

    #[test]
    fn quantile_interpolates() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&v, 0.95).unwrap() - 95.05).abs() < 1e-9);
        assert_eq!(quantile(&v, 1.0).unwrap(), 100.0);
        assert_eq!(threshold_from_distances(&v, &[], Policy::InScopeRecall(1.0)).unwrap(), 100.0);
    }

    #[test]
    fn recall_policy_needs_twenty() {
        let v: Vec<f64> = (0..19).map(f64::from).collect();
        assert!(matches!(
            threshold_from_distances(&v, &[], Policy::default()),
            Err(Error::InsufficientSamples { needed: 20, actual: 19 })
        ));
    }

    #[test]
    fn f1_separable_takes_gap_midpoint() {
        let tau = threshold_from_distances(&[1.0, 2.0, 3.0], &[7.0, 8.0], Policy::F1Oos).unwrap();
        assert_eq!(tau, 5.0);
        assert!(threshold_from_distances(&[1.0], &[], Policy::F1Oos).is_err());
        assert!(threshold_from_distances(&[1.0], &[1.0], Policy::F1Oos).is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("is-recall@0.9".parse::<Policy>().unwrap(), Policy::InScopeRecall(0.9));
        assert_eq!("f1-oos".parse::<Policy>().unwrap(), Policy::F1Oos);
        let err = "is-recal@0.9".parse::<Policy>().unwrap_err().to_string();
        assert!(err.contains("f1-oos") && err.contains("is-recall@"));
        assert!("is-recall@1.5".parse::<Policy>().is_err());
        assert_eq!(Policy::default().to_string(), "is-recall@0.95");
    }
}
