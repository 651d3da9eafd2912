//! LLS example weights: down-weighting examples by the strength of their biased words.
//!
//! Every biased word gets an impact (its maximum biased degree, optionally
//! plus a frequency term), every biased example the mean impact of its
//! distinct biased words (or the minimum, when a word shortcut conflicts with
//! the overlap shortcut), and example impacts are min-max normalized over the
//! biased examples into weights in `[1 - beta, 1]`. Unbiased examples keep
//! weight 1.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::overlap::{DistanceUnit, OverlapStats};
use crate::stats::BiasTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Degree only.
    D,
    /// Degree plus frequency.
    Df,
    /// Degree plus frequency, with the conflict rule for sentence pairs.
    Full,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" => Ok(Self::D),
            "df" | "d+f" => Ok(Self::Df),
            "full" | "lls" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown LLS variant {other:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::D => "d",
            Self::Df => "df",
            Self::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqNormalization {
    /// `f / max f` over the biased words.
    #[default]
    MaxFreq,
    /// Raw example frequency.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictPolicy {
    /// The top word's label disagrees with the label implied by pair overlap.
    #[default]
    Overlap,
    /// The example holds biased words with different argmax labels.
    MixedLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlsConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    /// Normalized edit distance at or below which a pair implies a match.
    pub tau: f64,
    pub freq_normalization: FreqNormalization,
    pub conflict_policy: ConflictPolicy,
    pub distance_unit: DistanceUnit,
    /// Label implied by high overlap; defaults to the second label of the space.
    pub positive_label: Option<String>,
}

impl Default for LlsConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            alpha: 0.1,
            beta: 0.5,
            tau: 0.3,
            freq_normalization: FreqNormalization::MaxFreq,
            conflict_policy: ConflictPolicy::Overlap,
            distance_unit: DistanceUnit::Token,
            positive_label: None,
        }
    }
}

impl LlsConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha {} must be >= 0", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        Ok(())
    }

    fn positive_index(&self, table: &BiasTable) -> Result<usize> {
        match &self.positive_label {
            Some(l) => table
                .labels()
                .index_of(l)
                .ok_or_else(|| Error::LabelOutsideSpace(l.clone())),
            None => Ok(1),
        }
    }
}

/// Maximum biased degree of a biased word.
pub fn word_impact_d(word: &str, table: &BiasTable) -> Result<f64> {
    table
        .get(word)
        .map(|e| e.degree)
        .ok_or_else(|| Error::NotBiased(word.to_owned()))
}

/// Maximum biased degree plus `alpha` times the (normalized) frequency.
pub fn word_impact_df(word: &str, table: &BiasTable, alpha: f64, norm: FreqNormalization) -> Result<f64> {
    let e = table.get(word).ok_or_else(|| Error::NotBiased(word.to_owned()))?;
    let f = match norm {
        FreqNormalization::MaxFreq => e.freq as f64 / table.max_freq() as f64,
        FreqNormalization::None => e.freq as f64,
    };
    Ok(e.degree + alpha * f)
}

pub fn word_impact(word: &str, table: &BiasTable, config: &LlsConfig) -> Result<f64> {
    match config.variant {
        Variant::D => word_impact_d(word, table),
        Variant::Df | Variant::Full => word_impact_df(word, table, config.alpha, config.freq_normalization),
    }
}

/// Whether the example's word shortcut and overlap shortcut point at different labels.
pub fn detect_conflict(
    example: &Example,
    table: &BiasTable,
    overlap: &OverlapStats,
    config: &LlsConfig,
) -> Result<bool> {
    if !example.is_pair() {
        return Err(Error::NotPair(example.id.clone()));
    }
    let words = table.biased_words_in(example);
    if words.is_empty() {
        return Err(Error::UnbiasedExample(example.id.clone()));
    }
    match config.conflict_policy {
        ConflictPolicy::Overlap => {
            let mut top: Option<(&str, f64)> = None;
            for w in &words {
                let impact = word_impact(w, table, config)?;
                if top.is_none_or(|(_, best)| impact > best) {
                    top = Some((w, impact));
                }
            }
            let (word, _) = top.expect("non-empty");
            let word_label = table.get(word).expect("biased").label;
            let positive = config.positive_index(table)?;
            let implies_match = overlap.normalized_distance <= config.tau;
            Ok(if implies_match {
                word_label != positive
            } else {
                word_label == positive
            })
        }
        ConflictPolicy::MixedLabels => {
            let first = table.get(words[0]).expect("biased").label;
            Ok(words.iter().any(|w| table.get(w).expect("biased").label != first))
        }
    }
}

/// Impact of a biased example: mean impact of its distinct biased words, or
/// their minimum when the full variant detects a conflict.
pub fn example_impact(
    example: &Example,
    table: &BiasTable,
    config: &LlsConfig,
    overlap: Option<&OverlapStats>,
) -> Result<f64> {
    let words = table.biased_words_in(example);
    if words.is_empty() {
        return Err(Error::UnbiasedExample(example.id.clone()));
    }
    let impacts = words
        .iter()
        .map(|w| word_impact(w, table, config))
        .collect::<Result<Vec<f64>>>()?;

    let conflict = match config.variant {
        Variant::Full => {
            let computed;
            let overlap = match overlap {
                Some(o) => o,
                None => {
                    computed = OverlapStats::of_example(example, config.distance_unit)?;
                    &computed
                }
            };
            detect_conflict(example, table, overlap, config)?
        }
        _ => false,
    };

    Ok(if conflict {
        impacts.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        impacts.iter().sum::<f64>() / impacts.len() as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMeta {
    pub variant: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub min_impact: Option<f64>,
    pub max_impact: Option<f64>,
    pub biased_examples: usize,
    pub warning: Option<String>,
}

impl WeightMeta {
    pub fn named(variant: impl Into<String>) -> Self {
        Self {
            variant: variant.into(),
            alpha: None,
            beta: None,
            tau: None,
            min_impact: None,
            max_impact: None,
            biased_examples: 0,
            warning: None,
        }
    }
}

/// Per-example loss weights in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub meta: WeightMeta,
    entries: Vec<(String, f64)>,
    index: HashMap<String, usize>,
}

impl WeightTable {
    pub fn from_entries(meta: WeightMeta, entries: Vec<(String, f64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (id, w)) in entries.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::Config(format!("weight for {id:?} is not finite")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { meta, entries, index })
    }

    /// Weight 1 for every example.
    pub fn uniform(dataset: &Dataset) -> Self {
        let entries = dataset.examples().iter().map(|e| (e.id.clone(), 1.0)).collect();
        Self::from_entries(WeightMeta::named("uniform"), entries).expect("dataset ids are unique")
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tab-separated `id<TAB>weight` lines (6 decimals) under `#`-prefixed metadata.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_owned(), |x| format!("{x:.6}"));
        out.push_str(&format!("# variant={}\n", self.meta.variant));
        out.push_str(&format!("# alpha={}\n", opt(self.meta.alpha)));
        out.push_str(&format!("# beta={}\n", opt(self.meta.beta)));
        out.push_str(&format!("# tau={}\n", opt(self.meta.tau)));
        out.push_str(&format!("# min_impact={}\n", opt(self.meta.min_impact)));
        out.push_str(&format!("# max_impact={}\n", opt(self.meta.max_impact)));
        out.push_str(&format!("# biased_examples={}\n", self.meta.biased_examples));
        if let Some(warning) = &self.meta.warning {
            out.push_str(&format!("# warning={warning}\n"));
        }
        for (id, weight) in &self.entries {
            out.push_str(&format!("{id}\t{weight:.6}\n"));
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut meta = WeightMeta::named("unknown");
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let malformed = |message: String| Error::Malformed { line: i + 1, message };
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.trim().split_once('=') else {
                    continue;
                };
                let num = |v: &str| -> Result<Option<f64>> {
                    if v == "none" {
                        Ok(None)
                    } else {
                        v.parse().map(Some).map_err(|_| malformed(format!("bad number {v:?}")))
                    }
                };
                match key {
                    "variant" => meta.variant = value.to_owned(),
                    "alpha" => meta.alpha = num(value)?,
                    "beta" => meta.beta = num(value)?,
                    "tau" => meta.tau = num(value)?,
                    "min_impact" => meta.min_impact = num(value)?,
                    "max_impact" => meta.max_impact = num(value)?,
                    "biased_examples" => {
                        meta.biased_examples = value.parse().map_err(|_| malformed(format!("bad count {value:?}")))?
                    }
                    "warning" => meta.warning = Some(value.to_owned()),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (id, weight) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected id<TAB>weight".into()))?;
            let weight: f64 = weight
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad weight {weight:?}")))?;
            entries.push((id.to_owned(), weight));
        }
        Self::from_entries(meta, entries)
    }
}

/// Weights for every example of the training set the table was built from.
pub fn compute_weights(dataset: &Dataset, table: &BiasTable, config: &LlsConfig) -> Result<WeightTable> {
    config.validate()?;
    if config.variant == Variant::Full && !dataset.is_pair() {
        return Err(Error::Config("the full variant requires a sentence-pair dataset".into()));
    }

    let impacts: Vec<Option<f64>> = dataset
        .examples()
        .par_iter()
        .map(|ex| {
            if table.biased_words_in(ex).is_empty() {
                Ok(None)
            } else {
                example_impact(ex, table, config, None).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let biased: Vec<f64> = impacts.iter().flatten().copied().collect();
    let mut meta = WeightMeta {
        variant: format!("lls-{}", config.variant),
        alpha: (config.variant != Variant::D).then_some(config.alpha),
        beta: Some(config.beta),
        tau: (config.variant == Variant::Full).then_some(config.tau),
        min_impact: None,
        max_impact: None,
        biased_examples: biased.len(),
        warning: None,
    };
    if biased.is_empty() {
        meta.warning = Some("no biased examples; all weights are 1".into());
        let entries = dataset.examples().iter().map(|e| (e.id.clone(), 1.0)).collect();
        return WeightTable::from_entries(meta, entries);
    }

    let lo = biased.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = biased.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    meta.min_impact = Some(lo);
    meta.max_impact = Some(hi);
    let span = hi - lo;

    let entries = dataset
        .examples()
        .iter()
        .zip(&impacts)
        .map(|(ex, impact)| {
            let w = match impact {
                None => 1.0,
                Some(b) => {
                    // a single impact value normalizes to 1
                    let norm = if span > 0.0 { (b - lo) / span } else { 1.0 };
                    1.0 - config.beta * norm
                }
            };
            (ex.id.clone(), w)
        })
        .collect();
    WeightTable::from_entries(meta, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSpace;
    use crate::stats::BiasEntry;

    fn table(entries: &[(&str, usize, f64, usize)]) -> BiasTable {
        BiasTable::from_entries(
            LabelSpace::numeric(2).unwrap(),
            3,
            0.8,
            entries
                .iter()
                .map(|&(w, label, degree, freq)| (w.to_owned(), BiasEntry { label, degree, freq })),
        )
        .unwrap()
    }

    fn pair(id: &str, a: &str, b: &str) -> Example {
        let split = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        Example::from_tokens(id, split(a), Some(split(b)), "1")
    }

    fn single(id: &str, a: &str) -> Example {
        Example::from_tokens(id, a.split_whitespace().map(String::from).collect(), None, "1")
    }

    #[test]
    fn degree_impacts_from_reported_words() {
        let t = table(&[("handy", 1, 33.0 / 35.0, 35), ("float", 0, 1.0, 5)]);
        assert!((word_impact_d("handy", &t).unwrap() - 0.942857).abs() < 1e-6);
        assert_eq!(word_impact_d("float", &t).unwrap(), 1.0);
        assert!(matches!(word_impact_d("rice", &t), Err(Error::NotBiased(_))));
    }

    #[test]
    fn frequency_impact() {
        let t = table(&[("a", 1, 0.9, 10), ("b", 0, 0.85, 20)]);
        for w in ["a", "b"] {
            assert_eq!(
                word_impact_df(w, &t, 0.0, FreqNormalization::MaxFreq).unwrap(),
                word_impact_d(w, &t).unwrap()
            );
        }
        // f_hat = 10 / 20
        assert!((word_impact_df("a", &t, 0.2, FreqNormalization::MaxFreq).unwrap() - 1.0).abs() < 1e-12);
        assert!((word_impact_df("b", &t, 0.1, FreqNormalization::MaxFreq).unwrap() - 0.95).abs() < 1e-12);
        assert!((word_impact_df("a", &t, 0.01, FreqNormalization::None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example_impact_mean_and_min() {
        let t = table(&[("p", 1, 0.8, 10), ("q", 1, 1.0, 10)]);
        let d = LlsConfig::new(Variant::D);
        assert_eq!(example_impact(&single("1", "p x p"), &t, &d, None).unwrap(), 0.8);
        assert!((example_impact(&single("2", "p q x"), &t, &d, None).unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(
            example_impact(&single("3", "x y"), &t, &d, None),
            Err(Error::UnbiasedExample(_))
        ));

        // both words point at label 1, a disjoint pair implies label 0: conflict
        let full = LlsConfig {
            alpha: 0.0,
            ..LlsConfig::new(Variant::Full)
        };
        let e = pair("4", "p q", "x y");
        let o = OverlapStats::of_example(&e, DistanceUnit::Token).unwrap();
        assert!(detect_conflict(&e, &t, &o, &full).unwrap());
        assert_eq!(example_impact(&e, &t, &full, Some(&o)).unwrap(), 0.8);
    }

    #[test]
    fn conflict_cases() {
        let t = table(&[("w0", 0, 0.9, 10), ("w1", 1, 0.9, 10)]);
        let cfg = LlsConfig::default();

        let same = pair("1", "w0 a b", "w0 a b");
        let o = OverlapStats::of_example(&same, DistanceUnit::Token).unwrap();
        assert!(detect_conflict(&same, &t, &o, &cfg).unwrap());

        let disjoint = pair("2", "w0 a b", "c d e");
        let o = OverlapStats::of_example(&disjoint, DistanceUnit::Token).unwrap();
        assert_eq!(o.normalized_distance, 1.0);
        assert!(!detect_conflict(&disjoint, &t, &o, &cfg).unwrap());

        let boundary = pair("3", "w1 a b", "w1 a c");
        let o = OverlapStats::of_example(&boundary, DistanceUnit::Token).unwrap();
        let cfg = LlsConfig {
            tau: o.normalized_distance,
            ..LlsConfig::default()
        };
        assert!(!detect_conflict(&boundary, &t, &o, &cfg).unwrap());

        let lone = single("4", "w0");
        assert!(matches!(detect_conflict(&lone, &t, &o, &cfg), Err(Error::NotPair(_))));
    }

    #[test]
    fn mixed_label_policy() {
        let t = table(&[("w0", 0, 0.9, 10), ("w1", 1, 0.9, 10)]);
        let cfg = LlsConfig {
            conflict_policy: ConflictPolicy::MixedLabels,
            ..LlsConfig::default()
        };
        let e = pair("1", "w0 w1", "a");
        let o = OverlapStats::of_example(&e, DistanceUnit::Token).unwrap();
        assert!(detect_conflict(&e, &t, &o, &cfg).unwrap());
        let e = pair("2", "w0", "w0");
        let o = OverlapStats::of_example(&e, DistanceUnit::Token).unwrap();
        assert!(!detect_conflict(&e, &t, &o, &cfg).unwrap());
    }

    fn dataset(examples: Vec<Example>) -> Dataset {
        Dataset::new(LabelSpace::numeric(2).unwrap(), examples).unwrap()
    }

    #[test]
    fn min_max_weights() {
        let t = table(&[("a", 1, 0.8, 10), ("b", 1, 0.9, 10), ("c", 1, 1.0, 10)]);
        let ds = dataset(vec![
            single("ea", "a x"),
            single("eb", "b x"),
            single("ec", "c x"),
            single("eu", "x y"),
        ]);
        let cfg = LlsConfig::new(Variant::D).with_beta(0.4);
        let w = compute_weights(&ds, &t, &cfg).unwrap();
        let expect = [("ea", 1.0), ("eb", 0.8), ("ec", 0.6), ("eu", 1.0)];
        for (id, want) in expect {
            assert!((w.get(id).unwrap() - want).abs() < 1e-12, "{id}");
        }
        assert_eq!(w.meta.min_impact, Some(0.8));
        assert_eq!(w.meta.max_impact, Some(1.0));

        let w0 = compute_weights(&ds, &t, &LlsConfig::new(Variant::D).with_beta(0.0)).unwrap();
        assert!(w0.entries().iter().all(|(_, w)| *w == 1.0));
    }

    #[test]
    fn lone_biased_example_gets_floor() {
        let t = table(&[("a", 1, 0.9, 10)]);
        let ds = dataset(vec![single("e1", "a"), single("e2", "b")]);
        let w = compute_weights(&ds, &t, &LlsConfig::new(Variant::D).with_beta(0.5)).unwrap();
        assert_eq!(w.get("e1"), Some(0.5));
        assert_eq!(w.get("e2"), Some(1.0));
    }

    #[test]
    fn no_biased_examples_warns() {
        let t = table(&[("a", 1, 0.9, 10)]);
        let ds = dataset(vec![single("e1", "b"), single("e2", "c")]);
        let w = compute_weights(&ds, &t, &LlsConfig::new(Variant::Df)).unwrap();
        assert!(w.meta.warning.is_some());
        assert!(w.entries().iter().all(|(_, w)| *w == 1.0));
    }

    #[test]
    fn full_variant_needs_pairs() {
        let t = table(&[("a", 1, 0.9, 10)]);
        let ds = dataset(vec![single("e1", "a")]);
        assert!(compute_weights(&ds, &t, &LlsConfig::default()).is_err());
        assert!(compute_weights(&ds, &t, &LlsConfig::default().with_beta(1.5)).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let t = table(&[("a", 1, 0.8, 10), ("b", 1, 1.0, 10)]);
        let ds = dataset(vec![single("e1", "a"), single("e2", "b"), single("e3", "a b")]);
        let w = compute_weights(&ds, &t, &LlsConfig::new(Variant::Df)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.tsv");
        w.write_tsv(&path).unwrap();
        let back = WeightTable::read_tsv(&path).unwrap();
        assert_eq!(back.meta.variant, "lls-df");
        assert_eq!(back.meta.biased_examples, 3);
        for (id, weight) in w.entries() {
            assert!((back.get(id).unwrap() - weight).abs() < 5e-7);
        }
    }
}
