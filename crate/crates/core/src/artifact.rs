//! Versioned binary model file: magic, version, JSON header, f64 payload.
//!
//! Layout: `"OOSM"`, u32 LE version, u64 LE header length, UTF-8 JSON header,
//! then little-endian f64 values: every encoder layer (weights row-major,
//! then bias), class means (C x d), covariance (d x d), precision (d x d).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::featurizer::{EncoderConfig, Featurizer};
use crate::linalg::{ClassStatistics, Matrix};
use crate::nn::{Activation, DenseLayer, DenseNetwork};
use crate::scorer::FittedScorer;
use crate::training::{EpochLog, TrainConfig};

pub const ARTIFACT_MAGIC: [u8; 4] = *b"OOSM";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    featurizer: Featurizer,
    encoder: EncoderConfig,
    encoder_layers: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    labels: LabelMap,
    tau: Option<f64>,
    ridge_used: f64,
    classes: usize,
    dim: usize,
    #[serde(default)]
    training: Option<TrainConfig>,
    #[serde(default)]
    training_log: Vec<EpochLog>,
    #[serde(default)]
    dataset_hashes: BTreeMap<String, String>,
}

/// A fitted scorer plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub scorer: FittedScorer<f64>,
    pub training: Option<TrainConfig>,
    pub training_log: Vec<EpochLog>,
    /// Split name to content hash of the data used.
    pub dataset_hashes: BTreeMap<String, String>,
}

impl ModelArtifact {
    pub fn new(scorer: FittedScorer<f64>) -> Self {
        Self {
            scorer,
            training: None,
            training_log: Vec::new(),
            dataset_hashes: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.scorer;
        s.validate()?;
        let header = Header {
            featurizer: s.featurizer,
            encoder: s.encoder_config.clone(),
            encoder_layers: s.encoder.layer_dims(),
            hidden_activation: s.encoder.hidden_activation(),
            output_activation: s.encoder.output_activation(),
            labels: s.labels.clone(),
            tau: s.tau,
            ridge_used: s.statistics.ridge_used,
            classes: s.class_count(),
            dim: s.embedding_dim(),
            training: self.training.clone(),
            training_log: self.training_log.clone(),
            dataset_hashes: self.dataset_hashes.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(&ARTIFACT_MAGIC);
        out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |values: &[f64]| {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for layer in s.encoder.layers() {
            put(layer.weights.as_slice());
            put(&layer.bias);
        }
        put(s.statistics.means.as_slice());
        put(s.statistics.covariance.as_slice());
        put(s.statistics.precision.as_slice());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != ARTIFACT_MAGIC {
            return Err(Error::BadMagic(format!("model artifact (found {:?})", String::from_utf8_lossy(magic))));
        }
        let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
        if version != ARTIFACT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version.to_string(),
                expected: ARTIFACT_VERSION.to_string(),
            });
        }
        let len = u64::from_le_bytes(r.take(8, "header length")?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| Error::Truncated("artifact header length".into()))?;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)?;

        let mut layers = Vec::new();
        for pair in header.encoder_layers.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let weights = Matrix::from_vec(i, o, r.floats(i * o, "encoder weights")?)?;
            let bias = r.floats(o, "encoder bias")?;
            layers.push(DenseLayer { weights, bias });
        }
        let encoder = if layers.is_empty() {
            DenseNetwork::identity(*header.encoder_layers.first().unwrap_or(&header.dim))
        } else {
            DenseNetwork::from_layers(layers, header.hidden_activation, header.output_activation)?
        };
        let (c, d) = (header.classes, header.dim);
        let statistics = ClassStatistics {
            means: Matrix::from_vec(c, d, r.floats(c * d, "class means")?)?,
            covariance: Matrix::from_vec(d, d, r.floats(d * d, "covariance")?)?,
            precision: Matrix::from_vec(d, d, r.floats(d * d, "precision")?)?,
            ridge_used: header.ridge_used,
        };
        if r.pos != bytes.len() {
            return Err(Error::InvalidData(format!(
                "{} trailing bytes after artifact payload",
                bytes.len() - r.pos
            )));
        }
        let scorer = FittedScorer {
            featurizer: header.featurizer,
            encoder_config: header.encoder,
            encoder,
            statistics,
            labels: header.labels,
            tau: header.tau,
        };
        scorer.validate()?;
        Ok(Self {
            scorer,
            training: header.training,
            training_log: header.training_log,
            dataset_hashes: header.dataset_hashes,
        })
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("artifact {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Truncated(what.into()))?, what)?;
        let v: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite(format!("artifact {what}")));
        }
        Ok(v)
    }
}
