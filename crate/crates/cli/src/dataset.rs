//! Loading and writing dataset splits as EMB1 (`.emb`) or JSONL (`.jsonl`) files.

use std::path::{Path, PathBuf};

use oosguard::data::{
    dataset_hash, read_emb, read_jsonl_dataset, write_emb, write_jsonl, DatasetBundle, EmbFile, EmbRecord, Example,
    Label, LabelMap, Provenance, RawExample,
};

use crate::error::{CliError, CliResult};

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Embeddings(Vec<Example<Vec<f32>>>),
    Text(Vec<Example<String>>),
}

/// Runs `$body` with `$ex` bound to the examples, whatever their input type.
#[macro_export]
macro_rules! with_examples {
    ($inputs:expr, $ex:ident => $body:expr) => {
        match $inputs {
            $crate::dataset::Inputs::Embeddings($ex) => $body,
            $crate::dataset::Inputs::Text($ex) => $body,
        }
    };
}

/// One loaded file: examples plus the label space their indices refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSplit {
    pub path: PathBuf,
    pub inputs: Inputs,
    pub labels: LabelMap,
}

impl LoadedSplit {
    pub fn len(&self) -> usize {
        with_examples!(&self.inputs, e => e.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hash(&self) -> String {
        with_examples!(&self.inputs, e => dataset_hash(e))
    }

    /// Re-indexes labels into `target` by name.
    pub fn relabel(self, target: &LabelMap) -> CliResult<Self> {
        if &self.labels == target {
            return Ok(self);
        }
        let map = |label: Label| -> CliResult<Label> {
            match label {
                Label::Oos => Ok(Label::Oos),
                Label::InScope(i) => {
                    let name = self.labels.name(i).unwrap_or("?");
                    target.index_of(name).map(Label::InScope).ok_or_else(|| {
                        CliError::data(format!("{}: label '{name}' is not known to the model", self.path.display()))
                    })
                }
            }
        };
        let inputs = match self.inputs {
            Inputs::Embeddings(ex) => Inputs::Embeddings(
                ex.into_iter()
                    .map(|e| Ok(Example { label: map(e.label)?, input: e.input }))
                    .collect::<CliResult<_>>()?,
            ),
            Inputs::Text(ex) => Inputs::Text(
                ex.into_iter()
                    .map(|e| Ok(Example { label: map(e.label)?, input: e.input }))
                    .collect::<CliResult<_>>()?,
            ),
        };
        Ok(Self {
            path: self.path,
            inputs,
            labels: target.clone(),
        })
    }
}

/// `data` itself if it is a file, else `data/<split>.emb` or `data/<split>.jsonl`.
pub fn split_path(data: &Path, split: &str) -> CliResult<PathBuf> {
    if !data.is_dir() {
        if !data.exists() {
            return Err(CliError::data(format!("{} does not exist", data.display())));
        }
        return Ok(data.to_owned());
    }
    for ext in ["emb", "jsonl"] {
        let p = data.join(format!("{split}.{ext}"));
        if p.exists() {
            return Ok(p);
        }
    }
    Err(CliError::data(format!(
        "{} has no {split}.emb or {split}.jsonl",
        data.display()
    )))
}

fn is_emb(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "emb")
}

pub fn load(path: &Path) -> CliResult<LoadedSplit> {
    if is_emb(path) {
        let file = read_emb(path)?;
        let examples = file
            .records
            .into_iter()
            .map(|r| Example {
                input: r.values,
                label: r.label,
            })
            .collect();
        Ok(LoadedSplit {
            path: path.to_owned(),
            inputs: Inputs::Embeddings(examples),
            labels: file.labels,
        })
    } else {
        let ds = read_jsonl_dataset(path)?;
        let examples = ds
            .examples
            .into_iter()
            .map(|e| {
                Ok(Example {
                    label: ds.labels.resolve(&e.label)?,
                    input: e.input,
                })
            })
            .collect::<oosguard::Result<_>>()?;
        Ok(LoadedSplit {
            path: path.to_owned(),
            inputs: Inputs::Text(examples),
            labels: ds.labels,
        })
    }
}

pub fn load_split(data: &Path, split: &str) -> CliResult<LoadedSplit> {
    load(&split_path(data, split)?)
}

/// Unsplit corpus with string labels, for the split command.
pub enum RawCorpus {
    Embeddings(Vec<RawExample<Vec<f32>>>),
    Text(Vec<RawExample<String>>),
}

pub fn load_raw(path: &Path) -> CliResult<RawCorpus> {
    let split = load(path)?;
    let labels = split.labels;
    let raw = |label: Label| labels.label_name(label).to_owned();
    Ok(match split.inputs {
        Inputs::Embeddings(ex) => RawCorpus::Embeddings(
            ex.into_iter()
                .map(|e| RawExample {
                    label: raw(e.label),
                    input: e.input,
                })
                .collect(),
        ),
        Inputs::Text(ex) => RawCorpus::Text(
            ex.into_iter()
                .map(|e| RawExample {
                    label: raw(e.label),
                    input: e.input,
                })
                .collect(),
        ),
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn write_provenance(dir: &Path, provenance: &Provenance) -> CliResult<()> {
    let path = dir.join("provenance.json");
    let json = serde_json::to_string_pretty(provenance).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn splits_of<X>(bundle: &DatasetBundle<X>) -> [(&'static str, &[Example<X>]); 3] {
    [
        (SPLITS[0], &bundle.train),
        (SPLITS[1], &bundle.validation),
        (SPLITS[2], &bundle.test),
    ]
}

/// Writes `train.emb`, `validation.emb`, `test.emb` (with label sidecars) and `provenance.json`.
pub fn write_embedding_bundle(dir: &Path, bundle: &DatasetBundle<Vec<f32>>) -> CliResult<()> {
    create_dir(dir)?;
    let dim = bundle
        .train
        .first()
        .map(|e| e.input.len())
        .ok_or_else(|| CliError::data("train split is empty"))?;
    for (name, examples) in splits_of(bundle) {
        let file = EmbFile {
            dim,
            records: examples
                .iter()
                .map(|e| EmbRecord {
                    label: e.label,
                    values: e.input.clone(),
                })
                .collect(),
            labels: bundle.labels.clone(),
        };
        write_emb(&dir.join(format!("{name}.emb")), &file)?;
    }
    write_provenance(dir, &bundle.provenance)
}

/// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and `provenance.json`.
pub fn write_text_bundle(dir: &Path, bundle: &DatasetBundle<String>) -> CliResult<()> {
    create_dir(dir)?;
    for (name, examples) in splits_of(bundle) {
        let raw: Vec<RawExample<String>> = examples
            .iter()
            .map(|e| RawExample {
                input: e.input.clone(),
                label: bundle.labels.label_name(e.label).to_owned(),
            })
            .collect();
        write_jsonl(&dir.join(format!("{name}.jsonl")), &raw)?;
    }
    write_provenance(dir, &bundle.provenance)
}
