//! Text featurization and the trainable encoder that maps features to embeddings.
//!
//! The hashed bag-of-words featurizer is a deterministic stand-in for a
//! pretrained sentence encoder. Precomputed embeddings bypass it through the
//! passthrough kind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::DenseNetwork;
use crate::scalar::Scalar;

pub const DEFAULT_FEATURE_DIM: usize = 1024;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeaturizerKind {
    HashedBow,
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub kind: FeaturizerKind,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Featurizer {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        Self {
            kind: FeaturizerKind::HashedBow,
            dim,
            seed,
        }
    }

    pub fn passthrough(dim: usize) -> Self {
        Self {
            kind: FeaturizerKind::Passthrough,
            dim,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("featurizer dim must be > 0".into()));
        }
        Ok(())
    }

    pub fn accepts_text(&self) -> bool {
        self.kind == FeaturizerKind::HashedBow
    }

    /// Signed hashed bag of words, L2-normalized. Empty text gives the zero vector.
    pub fn featurize<T: Scalar>(&self, text: &str) -> Result<Vec<T>> {
        if !self.accepts_text() {
            return Err(Error::TextUnavailable);
        }
        self.validate()?;
        let mut counts = vec![0.0_f64; self.dim];
        for token in tokenize(text) {
            let bucket = (fnv1a(self.seed, token.as_bytes()) % self.dim as u64) as usize;
            let sign = if fnv1a(self.seed ^ SIGN_SALT, token.as_bytes()) & 1 == 0 {
                1.0
            } else {
                -1.0
            };
            counts[bucket] += sign;
        }
        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut counts {
                *v /= norm;
            }
        }
        Ok(counts.into_iter().map(T::lit).collect())
    }

    pub fn featurize_batch<T: Scalar, S: AsRef<str>>(&self, texts: &[S]) -> Result<Matrix<T>> {
        let rows = texts
            .iter()
            .map(|t| self.featurize(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.dim));
        }
        Matrix::from_rows(&rows)
    }
}

/// A scoring or training input: raw text or a precomputed embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query<'a> {
    Text(&'a str),
    Embedding(&'a [f32]),
}

/// Example inputs that can be turned into a [`Query`].
pub trait AsQuery {
    fn as_query(&self) -> Query<'_>;
}

impl AsQuery for String {
    fn as_query(&self) -> Query<'_> {
        Query::Text(self)
    }
}

impl AsQuery for Vec<f32> {
    fn as_query(&self) -> Query<'_> {
        Query::Embedding(self)
    }
}

impl Featurizer {
    /// Feature vector for a query. Embeddings are accepted only by the
    /// passthrough kind and must have exactly `dim` finite values.
    pub fn features<T: Scalar>(&self, query: Query<'_>) -> Result<Vec<T>> {
        match (self.kind, query) {
            (_, Query::Text(text)) => self.featurize(text),
            (FeaturizerKind::Passthrough, Query::Embedding(e)) => {
                if e.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: e.len(),
                        context: "embedding query",
                    });
                }
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite("embedding query"));
                }
                Ok(e.iter().map(|&v| T::lit(f64::from(v))).collect())
            }
            (FeaturizerKind::HashedBow, Query::Embedding(_)) => Err(Error::InvalidData(
                "this model featurizes text and does not accept embeddings".into(),
            )),
        }
    }

    /// One feature row per input.
    pub fn features_matrix<T: Scalar, X: AsQuery>(&self, inputs: &[X]) -> Result<Matrix<T>> {
        let mut data = Vec::with_capacity(inputs.len() * self.dim);
        for x in inputs {
            data.extend(self.features::<T>(x.as_query())?);
        }
        Matrix::from_vec(inputs.len(), self.dim, data)
    }
}

/// Shape of the trainable encoder: `feature_dim -> hidden... -> embedding_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    /// No layers at all; requires `feature_dim == embedding_dim`.
    #[serde(default)]
    pub identity: bool,
}

impl EncoderConfig {
    pub fn new(feature_dim: usize, hidden_dims: Vec<usize>, embedding_dim: usize) -> Self {
        Self {
            feature_dim,
            hidden_dims,
            embedding_dim,
            identity: false,
        }
    }

    /// `feature_dim -> 256 -> 128 -> 64`.
    pub fn default_for(feature_dim: usize) -> Self {
        Self::new(feature_dim, vec![256, 128], 64)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            feature_dim: dim,
            hidden_dims: Vec::new(),
            embedding_dim: dim,
            identity: true,
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.feature_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("encoder dims must be > 0: {:?}", self.layer_dims())));
        }
        if self.identity && (self.feature_dim != self.embedding_dim || !self.hidden_dims.is_empty()) {
            return Err(Error::InvalidConfig(
                "identity encoder needs feature_dim == embedding_dim and no hidden layers".into(),
            ));
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self, seed: u64) -> Result<DenseNetwork<T>> {
        self.validate()?;
        if self.identity {
            return Ok(DenseNetwork::identity(self.feature_dim));
        }
        DenseNetwork::relu_mlp(&self.layer_dims(), seed)
    }
}

/// Runs features through the encoder, one embedding per row.
pub fn encode<T: Scalar>(config: &EncoderConfig, encoder: &DenseNetwork<T>, features: &Matrix<T>) -> Result<Matrix<T>> {
    if encoder.input_dim() != config.feature_dim || encoder.output_dim() != config.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: config.embedding_dim,
            actual: encoder.output_dim(),
            context: "encoder does not match its config",
        });
    }
    encoder.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn empty_text_is_zero() {
        let f = Featurizer::hashed(64, 0);
        let v: Vec<f64> = f.featurize("").unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        let v: Vec<f64> = f.featurize("  !!, ").unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalization_rules() {
        let f = Featurizer::hashed(DEFAULT_FEATURE_DIM, 7);
        let a: Vec<f64> = f.featurize("Turn on the radio").unwrap();
        let b: Vec<f64> = f.featurize("turn ON the radio!").unwrap();
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = f.featurize("turn off the radio").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tokenizer_splits_on_non_alphanumeric() {
        assert_eq!(tokenize("Set a timer: 5-min, NOW"), vec!["set", "a", "timer", "5", "min", "now"]);
    }

    #[test]
    fn seed_changes_hashing() {
        let a: Vec<f64> = Featurizer::hashed(32, 1).featurize("hello world").unwrap();
        let b: Vec<f64> = Featurizer::hashed(32, 2).featurize("hello world").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn passthrough_rejects_text() {
        let f = Featurizer::passthrough(8);
        assert!(matches!(f.featurize::<f64>("hi"), Err(Error::TextUnavailable)));
    }

    #[test]
    fn encoder_shapes() {
        let cfg = EncoderConfig::default_for(1024);
        assert_eq!(cfg.layer_dims(), vec![1024, 256, 128, 64]);
        let mut bad = EncoderConfig::identity(4);
        bad.embedding_dim = 3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_encoder_passes_features() {
        let cfg = EncoderConfig::identity(3);
        let enc = cfg.build::<f64>(0).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(encode(&cfg, &enc, &x).unwrap(), x);
    }

    #[test]
    fn zero_encoder_gives_zero_embedding() {
        let cfg = EncoderConfig::new(5, vec![4], 3);
        let mut enc = cfg.build::<f64>(3).unwrap();
        for l in enc.layers_mut() {
            l.weights.scale(0.0);
        }
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(encode(&cfg, &enc, &x).unwrap(), Matrix::zeros(1, 3));
        let other = EncoderConfig::new(5, vec![4], 2);
        assert!(encode(&other, &enc, &x).is_err());
    }
}
