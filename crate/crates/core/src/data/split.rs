//! Split construction: in-scope/OOS designation and stratified partitioning.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{content_hash, ContentKey, DatasetBundle, Example, Label, LabelMap, Provenance, RawExample, OOS_LABEL};
use crate::error::{Error, Result};

/// Minimum share of examples the in-scope labels must jointly cover.
pub const IS_COVERAGE_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must be >= 0 and sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes for a class of `n` examples.
    pub fn partition(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.validation).round() as usize;
        let test = (n as f64 * self.test).round() as usize;
        let val = val.min(n);
        let test = test.min(n - val);
        (n - val - test, val, test)
    }
}

/// Drops exact duplicate inputs, keeping the first occurrence.
pub(crate) fn dedupe<X: ContentKey + Clone>(examples: &[RawExample<X>]) -> (Vec<RawExample<X>>, usize) {
    let mut seen = HashSet::new();
    let kept: Vec<_> = examples
        .iter()
        .filter(|e| seen.insert(content_hash(&e.input)))
        .cloned()
        .collect();
    let removed = examples.len() - kept.len();
    (kept, removed)
}

pub(crate) struct Splits<X> {
    pub train: Vec<Example<X>>,
    pub validation: Vec<Example<X>>,
    pub test: Vec<Example<X>>,
}

/// Stratified in-scope partition (per class, after a seeded shuffle) plus an
/// alternating validation/test assignment of the shuffled OOS inputs; an odd
/// OOS count gives validation the extra item.
pub(crate) fn assemble<X>(
    in_scope: Vec<Vec<X>>,
    mut oos: Vec<X>,
    ratios: &SplitRatios,
    rng: &mut ChaCha8Rng,
) -> Splits<X> {
    let mut splits = Splits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut inputs) in in_scope.into_iter().enumerate() {
        inputs.shuffle(rng);
        let (n_train, n_val, _) = ratios.partition(inputs.len());
        for (i, input) in inputs.into_iter().enumerate() {
            let ex = Example {
                input,
                label: Label::InScope(class),
            };
            if i < n_train {
                splits.train.push(ex);
            } else if i < n_train + n_val {
                splits.validation.push(ex);
            } else {
                splits.test.push(ex);
            }
        }
    }
    oos.shuffle(rng);
    for (i, input) in oos.into_iter().enumerate() {
        let ex = Example {
            input,
            label: Label::Oos,
        };
        if i % 2 == 0 {
            splits.validation.push(ex);
        } else {
            splits.test.push(ex);
        }
    }
    splits
}

fn group_by_label<X: Clone>(examples: &[RawExample<X>]) -> BTreeMap<String, Vec<X>> {
    let mut groups: BTreeMap<String, Vec<X>> = BTreeMap::new();
    for e in examples {
        groups.entry(e.label.clone()).or_default().push(e.input.clone());
    }
    groups
}

fn bundle<X: ContentKey>(splits: Splits<X>, labels: LabelMap, mut provenance: Provenance) -> Result<DatasetBundle<X>> {
    let mut b = DatasetBundle {
        train: splits.train,
        validation: splits.validation,
        test: splits.test,
        labels,
        provenance: Provenance::default(),
    };
    provenance.counts = b.counts();
    b.provenance = provenance;
    b.check_invariants()?;
    Ok(b)
}

/// Designates in-scope labels by coverage: labels are shuffled with `seed`
/// and taken in order until they cover at least 75% of the examples. The
/// rest become OOS, appear only in validation and test, and are divided
/// equally between them.
pub fn stackoverflow_style_split<X: ContentKey + Clone>(
    examples: &[RawExample<X>],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetBundle<X>> {
    ratios.validate()?;
    if examples.iter().any(|e| e.label == OOS_LABEL) {
        return Err(Error::InvalidData("input already contains OOS examples".into()));
    }
    let (examples, duplicates_removed) = dedupe(examples);
    let mut groups = group_by_label(&examples);
    if groups.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 distinct labels, got {}",
            groups.len()
        )));
    }
    let total = examples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<String> = groups.keys().cloned().collect();
    order.shuffle(&mut rng);

    let mut covered = 0usize;
    let mut chosen = Vec::new();
    for name in &order {
        if covered as f64 >= IS_COVERAGE_THRESHOLD * total as f64 {
            break;
        }
        covered += groups[name].len();
        chosen.push(name.clone());
    }
    if chosen.len() == order.len() {
        return Err(Error::InvalidData(
            "in-scope labels cover the whole dataset; no OOS labels remain".into(),
        ));
    }
    let labels = LabelMap::new({
        let mut names = chosen.clone();
        names.sort();
        names
    })?;
    let oos_labels: Vec<String> = order.iter().filter(|n| !chosen.contains(n)).cloned().collect();

    let in_scope = labels
        .names()
        .iter()
        .map(|n| groups.remove(n).expect("chosen label exists"))
        .collect();
    let oos: Vec<X> = {
        let mut sorted = oos_labels.clone();
        sorted.sort();
        sorted.iter().flat_map(|n| groups.remove(n).expect("label exists")).collect()
    };
    let splits = assemble(in_scope, oos, &ratios, &mut rng);
    let provenance = Provenance {
        procedure: "stackoverflow-style".into(),
        seed,
        in_scope_labels: labels.names().to_vec(),
        oos_labels,
        is_coverage: Some(covered as f64 / total as f64),
        duplicates_removed,
        ratios,
        ..Provenance::default()
    };
    bundle(splits, labels, provenance)
}

/// Designated labels (and any example already labelled `"oos"`) become OOS;
/// in-scope classes with fewer than `min_per_class` examples are dropped.
pub fn oos_domain_split<X: ContentKey + Clone>(
    examples: &[RawExample<X>],
    oos_labels: &BTreeSet<String>,
    min_per_class: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetBundle<X>> {
    ratios.validate()?;
    if oos_labels.is_empty() {
        return Err(Error::InvalidConfig("no OOS labels designated".into()));
    }
    let (examples, duplicates_removed) = dedupe(examples);
    let mut groups = group_by_label(&examples);
    if let Some(missing) = oos_labels.iter().find(|l| !groups.contains_key(*l)) {
        return Err(Error::InvalidData(format!("OOS label '{missing}' does not occur in the data")));
    }
    let mut oos = Vec::new();
    for name in oos_labels.iter().map(String::as_str).chain(std::iter::once(OOS_LABEL)) {
        if let Some(g) = groups.remove(name) {
            oos.extend(g);
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidData("every label is designated OOS".into()));
    }
    let dropped: Vec<String> = groups
        .iter()
        .filter(|(_, g)| g.len() < min_per_class)
        .map(|(n, _)| n.clone())
        .collect();
    for n in &dropped {
        groups.remove(n);
    }
    if groups.is_empty() {
        return Err(Error::InvalidData(format!(
            "no in-scope label has at least {min_per_class} examples"
        )));
    }
    let labels = LabelMap::new(groups.keys().cloned().collect())?;
    let in_scope = groups.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = assemble(in_scope, oos, &ratios, &mut rng);
    let provenance = Provenance {
        procedure: "oos-domain".into(),
        seed,
        in_scope_labels: labels.names().to_vec(),
        oos_labels: oos_labels.iter().cloned().collect(),
        dropped_labels: dropped,
        duplicates_removed,
        ratios,
        ..Provenance::default()
    };
    bundle(splits, labels, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(sizes: &[(&str, usize)]) -> Vec<RawExample<String>> {
        sizes
            .iter()
            .flat_map(|&(label, n)| {
                (0..n).map(move |i| RawExample {
                    input: format!("{label} question {i}"),
                    label: label.to_string(),
                })
            })
            .collect()
    }

    #[test]
    fn four_equal_labels_give_three_in_scope() {
        let data = corpus(&[("a", 100), ("b", 100), ("c", 100), ("d", 100)]);
        for seed in 0..5 {
            let b = stackoverflow_style_split(&data, SplitRatios::default(), seed).unwrap();
            assert_eq!(b.labels.len(), 3);
            assert_eq!(b.provenance.oos_labels.len(), 1);
            assert_eq!(b.provenance.is_coverage, Some(0.75));
            let c = b.counts();
            assert_eq!(c.validation_oos + c.test_oos, 100);
            assert_eq!(c.validation_oos, c.test_oos);
            assert_eq!(c.train, 240);
            assert_eq!(c.validation_is, 30);
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let data = corpus(&[("a", 40), ("b", 25), ("c", 17), ("d", 9), ("e", 3)]);
        let x = stackoverflow_style_split(&data, SplitRatios::default(), 9).unwrap();
        let y = stackoverflow_style_split(&data, SplitRatios::default(), 9).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn single_label_cannot_split() {
        let data = corpus(&[("a", 10)]);
        assert!(stackoverflow_style_split(&data, SplitRatios::default(), 0).is_err());
    }

    #[test]
    fn odd_oos_count_favors_validation() {
        let data = corpus(&[("a", 30), ("b", 30), ("c", 30), ("d", 7)]);
        // Find a seed where d is OOS alone.
        let b = (0..50)
            .filter_map(|s| stackoverflow_style_split(&data, SplitRatios::default(), s).ok())
            .find(|b| b.provenance.oos_labels == ["d"])
            .expect("some seed designates d as OOS");
        let c = b.counts();
        assert_eq!((c.validation_oos, c.test_oos), (4, 3));
    }

    #[test]
    fn duplicates_removed_before_split() {
        let mut data = corpus(&[("a", 10), ("b", 10), ("c", 10), ("d", 10)]);
        data.push(data[0].clone());
        let b = stackoverflow_style_split(&data, SplitRatios::default(), 1).unwrap();
        assert_eq!(b.provenance.duplicates_removed, 1);
        b.check_invariants().unwrap();
    }

    #[test]
    fn domain_split_drops_small_classes() {
        let data = corpus(&[("timer", 20), ("music", 30), ("weather", 9), ("alarm", 10)]);
        let oos: BTreeSet<String> = ["timer".to_string()].into();
        let b = oos_domain_split(&data, &oos, 10, SplitRatios::default(), 3).unwrap();
        assert_eq!(b.labels.names(), &["alarm", "music"]);
        assert_eq!(b.provenance.dropped_labels, ["weather"]);
        assert!(b.train.iter().all(|e| !e.label.is_oos()));
        let c = b.counts();
        assert_eq!(c.validation_oos + c.test_oos, 20);
    }

    #[test]
    fn domain_split_errors() {
        let data = corpus(&[("timer", 20), ("music", 30)]);
        let all: BTreeSet<String> = ["timer".to_string(), "music".to_string()].into();
        assert!(oos_domain_split(&data, &all, 1, SplitRatios::default(), 0).is_err());
        let missing: BTreeSet<String> = ["nope".to_string()].into();
        assert!(oos_domain_split(&data, &missing, 1, SplitRatios::default(), 0).is_err());
        assert!(oos_domain_split(&data, &BTreeSet::new(), 1, SplitRatios::default(), 0).is_err());
    }

    #[test]
    fn stratification_within_one_example() {
        let data = corpus(&[("timer", 20), ("a", 57), ("b", 33), ("c", 101), ("d", 12)]);
        let oos: BTreeSet<String> = ["timer".to_string()].into();
        let r = SplitRatios::default();
        let b = oos_domain_split(&data, &oos, 10, r, 5).unwrap();
        for (idx, name) in b.labels.names().iter().enumerate() {
            let n = data.iter().filter(|e| &e.label == name).count() as f64;
            let count = |s: &[Example<String>]| s.iter().filter(|e| e.label == Label::InScope(idx)).count() as f64;
            assert!((count(&b.train) - n * r.train).abs() <= 1.0, "{name} train");
            assert!((count(&b.validation) - n * r.validation).abs() <= 1.0, "{name} val");
            assert!((count(&b.test) - n * r.test).abs() <= 1.0, "{name} test");
        }
    }

    #[test]
    fn partition_sums() {
        let r = SplitRatios::default();
        for n in 0..200 {
            let (a, b, c) = r.partition(n);
            assert_eq!(a + b + c, n);
        }
        assert_eq!(r.partition(9), (7, 1, 1));
    }
}
