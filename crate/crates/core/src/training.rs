//! Joint softmax + autoencoder training of the encoder, statistics fitting and
//! the alpha sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Example, Label, LabelMap};
use crate::error::{Error, Result};
use crate::featurizer::{AsQuery, EncoderConfig, Featurizer};
use crate::linalg::{ClassStatistics, Matrix, StatisticsConfig};
use crate::metrics::{aupr_oos, auroc, intent_accuracy, ScoredLabel};
use crate::nn::{
    joint_loss, mse_reconstruction, softmax_cross_entropy, Activation, DenseNetwork, GradientSet, Objective,
    OptimizerConfig, OptimizerKind, OptimizerState,
};
use crate::scalar::Scalar;
use crate::scorer::FittedScorer;

/// Alpha values tried by [`sweep_alpha`] when no grid is given.
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.01, 0.1, 0.2, 0.5, 0.9];

/// Hidden layers of the default autoencoder head, `d -> 512 -> 64 -> 16 -> 64 -> 512 -> d`.
pub const DEFAULT_AUTOENCODER_HIDDEN: [usize; 5] = [512, 64, 16, 64, 512];

const STREAM_ENCODER: u64 = 1;
const STREAM_HEAD: u64 = 2;
const STREAM_AUTOENCODER: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;

/// Independent seed per component so that adding or removing one network
/// leaves the others' initialization and the batch order unchanged.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Encoder shape without the input size, which comes from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    /// The feature dimension when absent.
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    #[serde(default)]
    pub identity: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256, 128],
            embedding_dim: Some(64),
            identity: false,
        }
    }
}

impl EncoderSpec {
    pub fn resolve(&self, feature_dim: usize) -> EncoderConfig {
        if self.identity {
            return EncoderConfig::identity(feature_dim);
        }
        EncoderConfig::new(
            feature_dim,
            self.hidden_dims.clone(),
            self.embedding_dim.unwrap_or(feature_dim),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the reconstruction loss: `(1 - alpha) CE + alpha AE`.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub encoder: EncoderSpec,
    /// Hidden layers of the autoencoder head; input and output size equal the embedding dim.
    pub autoencoder_hidden: Vec<usize>,
    /// Train without the autoencoder head at all (cross-entropy only).
    pub ablate_autoencoder: bool,
    pub statistics: StatisticsConfig,
    /// Checked against the data when set.
    pub classes: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset("clinc150").expect("built-in preset")
    }
}

/// Names accepted by [`TrainConfig::preset`].
pub const PRESETS: [&str; 5] = ["clinc150", "stackoverflow", "mtop", "car-assistant", "synthetic"];

impl TrainConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (learning_rate, batch_size, epochs) = match name {
            "clinc150" => (1e-4, 256, 15),
            "stackoverflow" => (5e-5, 1024, 6),
            "mtop" => (2.25e-5, 128, 10),
            "car-assistant" => (2.25e-5, 1024, 7),
            "synthetic" => (1e-3, 64, 20),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset '{name}'; available: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut config = Self {
            alpha: 0.1,
            learning_rate,
            batch_size,
            epochs,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            encoder: EncoderSpec::default(),
            autoencoder_hidden: DEFAULT_AUTOENCODER_HIDDEN.to_vec(),
            ablate_autoencoder: false,
            statistics: StatisticsConfig::default(),
            classes: None,
        };
        if name == "synthetic" {
            config.encoder = EncoderSpec {
                hidden_dims: vec![64],
                embedding_dim: None,
                identity: false,
            };
            config.autoencoder_hidden = vec![16, 4, 16];
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be >= 1".into());
        }
        if self.autoencoder_hidden.contains(&0) {
            return bad("autoencoder layer sizes must be > 0".into());
        }
        Ok(())
    }

    /// The alpha actually applied to the loss; an ablated head contributes nothing.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablate_autoencoder {
            0.0
        } else {
            self.alpha
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Adam => OptimizerConfig::adam(self.learning_rate),
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.learning_rate),
        }
    }

    pub fn autoencoder_dims(&self, embedding_dim: usize) -> Vec<usize> {
        std::iter::once(embedding_dim)
            .chain(self.autoencoder_hidden.iter().copied())
            .chain(std::iter::once(embedding_dim))
            .collect()
    }
}

/// Features and in-scope class indices used for training or statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
                context: "training labels vs feature rows",
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { features, labels, classes })
    }

    /// Featurizes examples; any OOS example is rejected.
    pub fn from_examples<X: AsQuery>(featurizer: &Featurizer, examples: &[Example<X>], classes: usize) -> Result<Self> {
        let mut labels = Vec::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            match e.label {
                Label::InScope(c) => labels.push(c),
                Label::Oos => {
                    return Err(Error::InvalidData(format!(
                        "training example {i} is labeled OOS; OOS data must not be used for training"
                    )))
                }
            }
        }
        let inputs: Vec<&X> = examples.iter().map(|e| &e.input).collect();
        let mut data = Vec::with_capacity(inputs.len() * featurizer.dim);
        for x in inputs {
            data.extend(featurizer.features::<T>(x.as_query())?);
        }
        Self::new(Matrix::from_vec(examples.len(), featurizer.dim, data)?, labels, classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Losses of one epoch, each a batch-size-weighted mean over its batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub ce: f64,
    pub ae: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss<T> {
    pub ce: T,
    pub ae: T,
    pub total: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGradients<T> {
    pub encoder: GradientSet<T>,
    pub head: GradientSet<T>,
    pub autoencoder: Option<GradientSet<T>>,
}

/// Encoder with its softmax and (optional) autoencoder heads.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel<T> {
    pub encoder_config: EncoderConfig,
    pub encoder: DenseNetwork<T>,
    pub head: DenseNetwork<T>,
    pub autoencoder: Option<DenseNetwork<T>>,
    pub config: TrainConfig,
    pub log: Vec<EpochLog>,
}

impl<T: Scalar> JointModel<T> {
    /// Freshly initialized networks for the given feature size and class count.
    pub fn init(config: &TrainConfig, feature_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        if classes < 2 {
            return Err(Error::InvalidData(format!("need at least 2 classes, got {classes}")));
        }
        if let Some(c) = config.classes {
            if c != classes {
                return Err(Error::InvalidConfig(format!(
                    "config expects {c} classes but the data has {classes}"
                )));
            }
        }
        let encoder_config = config.encoder.resolve(feature_dim);
        let encoder = encoder_config.build(derive_seed(config.seed, STREAM_ENCODER))?;
        let d = encoder_config.embedding_dim;
        let head = DenseNetwork::new(
            &[d, classes],
            Activation::Relu,
            Activation::Linear,
            derive_seed(config.seed, STREAM_HEAD),
        )?;
        let autoencoder = if config.ablate_autoencoder {
            None
        } else {
            Some(DenseNetwork::relu_mlp(
                &config.autoencoder_dims(d),
                derive_seed(config.seed, STREAM_AUTOENCODER),
            )?)
        };
        Ok(Self {
            encoder_config,
            encoder,
            head,
            autoencoder,
            config: config.clone(),
            log: Vec::new(),
        })
    }

    /// Joint loss on one batch and its gradients for every network. The
    /// reconstruction target is the embedding itself, so the autoencoder
    /// loss reaches the encoder both through the head and through the target.
    pub fn loss_and_gradients(&self, features: &Matrix<T>, labels: &[usize]) -> Result<(BatchLoss<T>, JointGradients<T>)> {
        let alpha = T::lit(self.config.effective_alpha());
        let keep = T::one() - alpha;
        let enc_trace = self.encoder.forward(features)?;
        let s = enc_trace.output();

        let head_trace = self.head.forward(s)?;
        let (ce, grad_logits) = softmax_cross_entropy(head_trace.output(), labels)?;
        let (mut head_grads, mut grad_s) = self.head.backward(&head_trace, &grad_logits)?;
        scale_gradients(&mut head_grads, keep);
        grad_s.scale(keep);

        let (ae, ae_grads) = match &self.autoencoder {
            Some(net) => {
                let ae_trace = net.forward(s)?;
                let (ae, grad_r) = mse_reconstruction(s, ae_trace.output())?;
                let (mut grads, through_head) = net.backward(&ae_trace, &grad_r)?;
                scale_gradients(&mut grads, alpha);
                if alpha != T::zero() {
                    for ((g, &h), &r) in grad_s
                        .as_mut_slice()
                        .iter_mut()
                        .zip(through_head.as_slice())
                        .zip(grad_r.as_slice())
                    {
                        *g += alpha * (h - r);
                    }
                }
                (ae, Some(grads))
            }
            None => (T::zero(), None),
        };
        let total = joint_loss(ce, ae, alpha)?;
        let (encoder_grads, _) = self.encoder.backward(&enc_trace, &grad_s)?;
        Ok((
            BatchLoss { ce, ae, total },
            JointGradients {
                encoder: encoder_grads,
                head: head_grads,
                autoencoder: ae_grads,
            },
        ))
    }

    pub fn embed(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        self.encoder.predict(features)
    }
}

fn scale_gradients<T: Scalar>(grads: &mut GradientSet<T>, factor: T) {
    if factor == T::one() {
        return;
    }
    for l in &mut grads.layers {
        l.weights.scale(factor);
        for b in &mut l.bias {
            *b *= factor;
        }
    }
}

/// Trains all networks jointly with a seeded per-epoch shuffle.
pub fn train<T: Scalar>(config: &TrainConfig, data: &TrainingSet<T>) -> Result<JointModel<T>> {
    if data.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    if !data.features.is_finite() {
        return Err(Error::non_finite("training features"));
    }
    let mut model = JointModel::init(config, data.features.cols(), data.classes)?;
    let opt = config.optimizer_config();
    let mut enc_opt = OptimizerState::new(opt, &model.encoder);
    let mut head_opt = OptimizerState::new(opt, &model.head);
    let mut ae_opt = model.autoencoder.as_ref().map(|ae| OptimizerState::new(opt, ae));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_SHUFFLE));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let alpha = config.effective_alpha();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut ce_sum, mut ae_sum) = (0.0, 0.0);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = data.features.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&x, &y)?;
            if !loss.total.is_finite() || !loss.ce.is_finite() || !loss.ae.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("training loss at epoch {} batch {}", epoch + 1, batch + 1),
                });
            }
            let w = idx.len() as f64;
            ce_sum += loss.ce.as_f64() * w;
            ae_sum += loss.ae.as_f64() * w;
            enc_opt.step(&mut model.encoder, &grads.encoder)?;
            head_opt.step(&mut model.head, &grads.head)?;
            if let (Some(ae), Some(state), Some(g)) = (model.autoencoder.as_mut(), ae_opt.as_mut(), grads.autoencoder.as_ref()) {
                state.step(ae, g)?;
            }
        }
        let n = data.len() as f64;
        let (ce, ae) = (ce_sum / n, ae_sum / n);
        model.log.push(EpochLog {
            epoch: epoch + 1,
            ce,
            ae,
            total: (1.0 - alpha) * ce + alpha * ae,
        });
    }
    Ok(model)
}

/// Discards both heads and fits class statistics on the encoder's embeddings
/// of the training data.
pub fn fit_statistics<T: Scalar>(
    model: &JointModel<T>,
    featurizer: Featurizer,
    data: &TrainingSet<T>,
    labels: LabelMap,
) -> Result<FittedScorer<T>> {
    if labels.len() != data.classes {
        return Err(Error::DimensionMismatch {
            expected: data.classes,
            actual: labels.len(),
            context: "label map vs training classes",
        });
    }
    let embeddings = model.embed(&data.features)?;
    let statistics = ClassStatistics::fit(&embeddings, &data.labels, data.classes, &model.config.statistics)?;
    FittedScorer::new(featurizer, model.encoder_config.clone(), model.encoder.clone(), statistics, labels)
}

/// Joint objective over all parameters of a model on a fixed batch, for
/// gradient checking.
pub struct JointObjective<T> {
    pub model: JointModel<T>,
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> JointObjective<T> {
    fn networks(&self) -> Vec<&DenseNetwork<T>> {
        let mut nets = vec![&self.model.encoder, &self.model.head];
        nets.extend(self.model.autoencoder.as_ref());
        nets
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (n, net) in self.networks().into_iter().enumerate() {
            if index < net.parameter_count() {
                return (n, index);
            }
            index -= net.parameter_count();
        }
        panic!("parameter index out of range");
    }
}

impl<T: Scalar> Objective<T> for JointObjective<T> {
    fn parameter_count(&self) -> usize {
        self.networks().iter().map(|n| n.parameter_count()).sum()
    }

    fn parameter(&self, index: usize) -> T {
        let (n, i) = self.locate(index);
        self.networks()[n].parameters()[i]
    }

    fn set_parameter(&mut self, index: usize, value: T) {
        let (n, i) = self.locate(index);
        let net = match n {
            0 => &mut self.model.encoder,
            1 => &mut self.model.head,
            _ => self.model.autoencoder.as_mut().expect("located in autoencoder"),
        };
        *net.parameter_mut(i).expect("index in range") = value;
    }

    fn loss(&self) -> Result<T> {
        Ok(self.model.loss_and_gradients(&self.features, &self.labels)?.0.total)
    }

    fn gradient(&self) -> Result<Vec<T>> {
        let (_, g) = self.model.loss_and_gradients(&self.features, &self.labels)?;
        let mut out = g.encoder.flatten();
        out.extend(g.head.flatten());
        if let Some(ae) = g.autoencoder {
            out.extend(ae.flatten());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub aupr_oos: f64,
    pub auroc: f64,
    pub intent_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub best_alpha: f64,
    pub best_config: TrainConfig,
    /// In grid order.
    pub entries: Vec<SweepEntry>,
}

/// Validation data for model selection: features plus ground truth with OOS.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet<T> {
    pub features: Matrix<T>,
    pub labels: Vec<Label>,
}

impl<T: Scalar> ValidationSet<T> {
    pub fn from_examples<X: AsQuery>(featurizer: &Featurizer, examples: &[Example<X>]) -> Result<Self> {
        let mut data = Vec::with_capacity(examples.len() * featurizer.dim);
        for e in examples {
            data.extend(featurizer.features::<T>(e.input.as_query())?);
        }
        Ok(Self {
            features: Matrix::from_vec(examples.len(), featurizer.dim, data)?,
            labels: examples.iter().map(|e| e.label).collect(),
        })
    }
}

/// Scores every validation row and pairs it with ground truth.
pub fn scored_labels<T: Scalar>(scorer: &FittedScorer<T>, features: &Matrix<T>, labels: &[Label]) -> Result<Vec<ScoredLabel>> {
    let results = scorer.score_embeddings(&scorer.embed(features)?)?;
    Ok(results
        .iter()
        .zip(labels)
        .map(|(r, l)| ScoredLabel {
            score: r.d_min,
            is_oos: l.is_oos(),
            true_intent: l.intent(),
            predicted_intent: Some(r.c_min),
        })
        .collect())
}

/// Trains one model per alpha (in parallel) and picks the best validation
/// AUPR; ties go to the smaller alpha.
pub fn sweep_alpha<T: Scalar>(
    base: &TrainConfig,
    grid: &[f64],
    featurizer: Featurizer,
    train_set: &TrainingSet<T>,
    labels: &LabelMap,
    validation: &ValidationSet<T>,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("alpha grid is empty".into()));
    }
    let n_oos = validation.labels.iter().filter(|l| l.is_oos()).count();
    if n_oos == 0 || n_oos == validation.labels.len() {
        return Err(Error::InvalidData(
            "validation set must contain both in-scope and OOS examples".into(),
        ));
    }
    let entries: Vec<SweepEntry> = grid
        .par_iter()
        .map(|&alpha| {
            let config = TrainConfig { alpha, ..base.clone() };
            let model = train(&config, train_set)?;
            let scorer = fit_statistics(&model, featurizer, train_set, labels.clone())?;
            let items = scored_labels(&scorer, &validation.features, &validation.labels)?;
            Ok(SweepEntry {
                alpha,
                aupr_oos: aupr_oos(&items)?,
                auroc: auroc(&items)?,
                intent_accuracy: intent_accuracy(&items)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = entries[0];
    for e in &entries[1..] {
        if e.aupr_oos > best.aupr_oos || (e.aupr_oos == best.aupr_oos && e.alpha < best.alpha) {
            best = *e;
        }
    }
    Ok(SweepReport {
        best_alpha: best.alpha,
        best_config: TrainConfig {
            alpha: best.alpha,
            ..base.clone()
        },
        entries,
    })
}
