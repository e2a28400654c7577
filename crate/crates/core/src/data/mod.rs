//! Datasets: labels, split bundles, file formats and the synthetic generator.

mod emb;
mod jsonl;
mod split;
mod synth;

pub use emb::{decode_emb, encode_emb, read_emb, sidecar_path, write_emb, EmbFile, EmbRecord, EMB_MAGIC, EMB_VERSION, OOS_SENTINEL};
pub use jsonl::{read_jsonl_dataset, write_jsonl, JsonlDataset};
pub use split::{oos_domain_split, stackoverflow_style_split, SplitRatios, IS_COVERAGE_THRESHOLD};
pub use synth::{cluster_means, synthesize, OosMode, SyntheticSpec};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Label string that marks an out-of-scope example in text formats.
pub const OOS_LABEL: &str = "oos";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    InScope(usize),
    Oos,
}

impl Label {
    pub fn is_oos(self) -> bool {
        self == Label::Oos
    }

    pub fn intent(self) -> Option<usize> {
        match self {
            Label::InScope(i) => Some(i),
            Label::Oos => None,
        }
    }
}

/// Dense intent indices `0..C` and their names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if n == OOS_LABEL {
                return Err(Error::InvalidData(format!("'{OOS_LABEL}' cannot be an intent name")));
            }
            if !seen.insert(n) {
                return Err(Error::InvalidData(format!("duplicate intent name '{n}'")));
            }
        }
        Ok(Self { names })
    }

    /// Sorted distinct names, excluding the OOS marker.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = labels
            .into_iter()
            .filter(|l| *l != OOS_LABEL)
            .map(str::to_owned)
            .collect();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Maps a label string; `"oos"` maps to [`Label::Oos`].
    pub fn resolve(&self, name: &str) -> Result<Label> {
        if name == OOS_LABEL {
            return Ok(Label::Oos);
        }
        self.index_of(name)
            .map(Label::InScope)
            .ok_or_else(|| Error::InvalidData(format!("unknown label '{name}'")))
    }

    pub fn label_name(&self, label: Label) -> &str {
        match label {
            Label::Oos => OOS_LABEL,
            Label::InScope(i) => self.name(i).unwrap_or("?"),
        }
    }
}

/// An input with its raw string label, before label indices are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample<X> {
    pub input: X,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<X> {
    pub input: X,
    pub label: Label,
}

/// Bytes identifying an input for duplicate and leakage detection.
pub trait ContentKey {
    fn content_bytes(&self) -> Vec<u8>;
}

impl ContentKey for String {
    fn content_bytes(&self) -> Vec<u8> {
        self.as_bytes().to_vec()
    }
}

impl ContentKey for Vec<f32> {
    fn content_bytes(&self) -> Vec<u8> {
        self.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

pub fn content_hash<X: ContentKey>(input: &X) -> [u8; 32] {
    Sha256::digest(input.content_bytes()).into()
}

/// Hex SHA-256 over all inputs and labels, in order.
pub fn dataset_hash<X: ContentKey>(examples: &[Example<X>]) -> String {
    let mut h = Sha256::new();
    for e in examples {
        h.update(e.input.content_bytes());
        match e.label {
            Label::InScope(i) => h.update((i as u64).to_le_bytes()),
            Label::Oos => h.update(u64::MAX.to_le_bytes()),
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation_is: usize,
    pub validation_oos: usize,
    pub test_is: usize,
    pub test_oos: usize,
}

/// How a bundle was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub procedure: String,
    pub seed: u64,
    pub in_scope_labels: Vec<String>,
    pub oos_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_labels: Vec<String>,
    pub duplicates_removed: usize,
    pub ratios: SplitRatios,
    pub counts: SplitCounts,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

/// Train (in-scope only), validation and test splits plus the label space.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle<X> {
    pub train: Vec<Example<X>>,
    pub validation: Vec<Example<X>>,
    pub test: Vec<Example<X>>,
    pub labels: LabelMap,
    pub provenance: Provenance,
}

impl<X: ContentKey> DatasetBundle<X> {
    pub fn counts(&self) -> SplitCounts {
        let oos = |s: &[Example<X>]| s.iter().filter(|e| e.label.is_oos()).count();
        SplitCounts {
            train: self.train.len(),
            validation_is: self.validation.len() - oos(&self.validation),
            validation_oos: oos(&self.validation),
            test_is: self.test.len() - oos(&self.test),
            test_oos: oos(&self.test),
        }
    }

    /// Train holds no OOS, labels are in range, and no input appears in two splits.
    pub fn check_invariants(&self) -> Result<()> {
        if self.train.iter().any(|e| e.label.is_oos()) {
            return Err(Error::InvalidData("train split contains OOS examples".into()));
        }
        let c = self.labels.len();
        for e in self.train.iter().chain(&self.validation).chain(&self.test) {
            if let Label::InScope(i) = e.label {
                if i >= c {
                    return Err(Error::LabelOutOfRange { label: i, classes: c });
                }
            }
        }
        let hashes = |s: &[Example<X>]| s.iter().map(|e| content_hash(&e.input)).collect::<HashSet<_>>();
        let (tr, va, te) = (hashes(&self.train), hashes(&self.validation), hashes(&self.test));
        if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
            return Err(Error::InvalidData("an example appears in more than one split".into()));
        }
        Ok(())
    }
}

/// Splits examples into a feature matrix and their labels.
pub fn to_matrix<T: Scalar>(examples: &[Example<Vec<f32>>], dim: usize) -> Result<(Matrix<T>, Vec<Label>)> {
    let mut data = Vec::with_capacity(examples.len() * dim);
    for e in examples {
        if e.input.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.input.len(),
                context: "example embedding",
            });
        }
        data.extend(e.input.iter().map(|&v| T::lit(f64::from(v))));
    }
    let labels = examples.iter().map(|e| e.label).collect();
    Ok((Matrix::from_vec(examples.len(), dim, data)?, labels))
}
