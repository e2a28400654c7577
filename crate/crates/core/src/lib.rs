//! Out-of-scope intent detection: an encoder trained with a joint
//! classification and reconstruction loss, scored at inference by the minimum
//! Mahalanobis distance to the class means under a shared covariance.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line tool and model files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod data;
pub mod error;
pub mod featurizer;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod scorer;
pub mod training;

pub use artifact::ModelArtifact;
pub use error::{Error, ErrorKind, Result};
pub use featurizer::{EncoderConfig, Featurizer, Query};
pub use metrics::{EvaluationReport, ScoredLabel};
pub use scalar::Scalar;
pub use scorer::{decide, Decision, Policy, ScoreResult, Verdict};
pub use training::{TrainConfig, TrainingSet, ValidationSet};

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Network = nn::DenseNetwork<f64>;
pub type Statistics = linalg::ClassStatistics<f64>;
pub type Scorer = scorer::FittedScorer<f64>;
pub type Model = training::JointModel<f64>;
pub type EmbeddingBundle = data::DatasetBundle<Vec<f32>>;
pub type TextBundle = data::DatasetBundle<String>;
