//! Gaussian-cluster benchmark generator with several kinds of OOS data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::split::{assemble, SplitRatios};
use super::{DatasetBundle, LabelMap, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OosMode {
    /// Points on a sphere enclosing every cluster.
    #[default]
    Shell,
    /// Uniform over the in-scope bounding box enlarged 1.5x about its center.
    UniformBox,
    /// Samples of extra clusters that never enter training.
    HeldOutClusters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Per-coordinate standard deviation within a cluster.
    pub spread: f64,
    /// Norm of every cluster mean.
    pub placement_scale: f64,
    pub oos_mode: OosMode,
    /// Total OOS examples; defaults to a fifth of the in-scope total.
    pub oos_count: Option<usize>,
    /// Extra clusters for [`OosMode::HeldOutClusters`].
    pub held_out_clusters: usize,
    /// Shell distance beyond the outermost mean, in units of the in-cluster 99.9% radius.
    pub shell_margin: f64,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            samples_per_class: 200,
            spread: 1.0,
            placement_scale: 6.0,
            oos_mode: OosMode::Shell,
            oos_count: None,
            held_out_clusters: 2,
            shell_margin: 1.25,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig("synthetic data needs at least 2 classes".into()));
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("dim and samples_per_class must be > 0".into()));
        }
        if !(self.spread > 0.0) || !(self.placement_scale >= 0.0) || !(self.shell_margin > 1.0) {
            return Err(Error::InvalidConfig(
                "spread must be > 0, placement_scale >= 0 and shell_margin > 1".into(),
            ));
        }
        if self.oos_mode == OosMode::HeldOutClusters && self.held_out_clusters == 0 {
            return Err(Error::InvalidConfig("held-out-clusters mode needs at least one cluster".into()));
        }
        self.ratios.validate()
    }

    pub fn oos_total(&self) -> usize {
        self.oos_count.unwrap_or(self.classes * self.samples_per_class / 5)
    }

    /// Radius containing 99.9% of a cluster's samples: `spread * sqrt(chi2_dim(0.999))`.
    pub fn cluster_radius_999(&self) -> f64 {
        let chi = ChiSquared::new(self.dim as f64).expect("dim > 0");
        self.spread * chi.inverse_cdf(0.999).sqrt()
    }

    /// Radius of the OOS shell around the origin.
    pub fn shell_radius(&self) -> f64 {
        self.placement_scale + self.shell_margin * self.cluster_radius_999()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let g = gaussian(rng, dim);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Cluster means, generated first from the seed so every mode shares them.
pub fn cluster_means(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.classes + spec.held_out_clusters)
        .map(|_| unit(&mut rng, spec.dim).into_iter().map(|v| v * spec.placement_scale).collect())
        .collect()
}

/// Generates an embedding-typed bundle; in-scope labels are `class_00`, `class_01`, ...
pub fn synthesize(spec: &SyntheticSpec) -> Result<DatasetBundle<Vec<f32>>> {
    spec.validate()?;
    let means = cluster_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5151_5151_5151_5151);
    let sample = |rng: &mut ChaCha8Rng, mean: &[f64]| -> Vec<f64> {
        mean.iter()
            .zip(gaussian(rng, spec.dim))
            .map(|(m, g)| m + spec.spread * g)
            .collect()
    };

    let in_scope_f64: Vec<Vec<Vec<f64>>> = means[..spec.classes]
        .iter()
        .map(|m| (0..spec.samples_per_class).map(|_| sample(&mut rng, m)).collect())
        .collect();

    let n_oos = spec.oos_total();
    let oos: Vec<Vec<f32>> = match spec.oos_mode {
        OosMode::Shell => {
            let radius = spec.shell_radius();
            (0..n_oos)
                .map(|_| to_f32(&unit(&mut rng, spec.dim).into_iter().map(|v| v * radius).collect::<Vec<_>>()))
                .collect()
        }
        OosMode::UniformBox => {
            let mut lo = vec![f64::INFINITY; spec.dim];
            let mut hi = vec![f64::NEG_INFINITY; spec.dim];
            for x in in_scope_f64.iter().flatten() {
                for k in 0..spec.dim {
                    lo[k] = lo[k].min(x[k]);
                    hi[k] = hi[k].max(x[k]);
                }
            }
            (0..n_oos)
                .map(|_| {
                    (0..spec.dim)
                        .map(|k| {
                            let center = 0.5 * (lo[k] + hi[k]);
                            let half = 0.75 * (hi[k] - lo[k]);
                            (center + rng.random_range(-1.0..=1.0) * half) as f32
                        })
                        .collect()
                })
                .collect()
        }
        OosMode::HeldOutClusters => {
            let held = &means[spec.classes..];
            (0..n_oos).map(|i| to_f32(&sample(&mut rng, &held[i % held.len()]))).collect()
        }
    };

    let in_scope: Vec<Vec<Vec<f32>>> = in_scope_f64
        .iter()
        .map(|class| class.iter().map(|x| to_f32(x)).collect())
        .collect();
    let names: Vec<String> = (0..spec.classes).map(|i| format!("class_{i:02}")).collect();
    let labels = LabelMap::new(names)?;
    let splits = assemble(in_scope, oos, &spec.ratios, &mut rng);

    let mut provenance = Provenance {
        procedure: "synthetic".into(),
        seed: spec.seed,
        in_scope_labels: labels.names().to_vec(),
        oos_labels: vec![format!("{:?}", spec.oos_mode).to_lowercase()],
        ratios: spec.ratios,
        ..Provenance::default()
    };
    if let serde_json::Value::Object(map) = serde_json::to_value(spec)? {
        provenance.parameters = map.into_iter().collect();
    }
    let mut bundle = DatasetBundle {
        train: splits.train,
        validation: splits.validation,
        test: splits.test,
        labels,
        provenance,
    };
    bundle.provenance.counts = bundle.counts();
    bundle.check_invariants()?;
    Ok(bundle)
}
