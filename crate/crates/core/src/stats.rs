//! Word/label co-occurrence statistics and biased-word detection.
//!
//! All counts are example-level: a word that occurs several times in one
//! example, or in both sentences of a pair, counts that example once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, LabelSpace};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_FREQ: usize = 3;
pub const DEFAULT_MIN_DEGREE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordStats {
    pub word: String,
    /// Number of examples containing the word.
    pub example_freq: usize,
    /// Examples containing the word, per label index.
    pub per_label: Vec<usize>,
}

impl WordStats {
    /// Fraction of the word's examples that carry `label`.
    pub fn degree(&self, label: usize) -> f64 {
        self.per_label[label] as f64 / self.example_freq as f64
    }

    /// `(label, degree)` with the highest degree; ties go to the earlier label.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0;
        for (l, &c) in self.per_label.iter().enumerate() {
            if c > self.per_label[best] {
                best = l;
            }
        }
        (best, self.degree(best))
    }
}

pub type WordStatsMap = BTreeMap<String, WordStats>;

/// Counts example frequency and per-label co-occurrence for every word.
///
/// Shards are counted independently and merged by element-wise addition.
pub fn compute_word_stats(dataset: &Dataset) -> WordStatsMap {
    let n_labels = dataset.labels().len();
    let merged: HashMap<&str, Vec<usize>> = dataset
        .examples()
        .par_iter()
        .zip(dataset.label_ids().par_iter())
        .fold(HashMap::new, |mut acc: HashMap<&str, Vec<usize>>, (ex, &label)| {
            for w in ex.word_set() {
                acc.entry(w).or_insert_with(|| vec![0; n_labels])[label] += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (w, counts) in b {
                let slot = a.entry(w).or_insert_with(|| vec![0; n_labels]);
                for (s, c) in slot.iter_mut().zip(counts) {
                    *s += c;
                }
            }
            a
        });

    merged
        .into_iter()
        .map(|(w, per_label)| {
            let stats = WordStats {
                word: w.to_owned(),
                example_freq: per_label.iter().sum(),
                per_label,
            };
            (w.to_owned(), stats)
        })
        .collect()
}

/// `|S(w, c)| / |S(w)|` for the named label.
pub fn biased_degree(stats: &WordStats, labels: &LabelSpace, label: &str) -> Result<f64> {
    let idx = labels
        .index_of(label)
        .ok_or_else(|| Error::LabelOutsideSpace(label.to_owned()))?;
    Ok(stats.degree(idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEntry {
    /// Label index with the highest degree.
    pub label: usize,
    pub degree: f64,
    pub freq: usize,
}

/// Words whose example frequency and maximum degree both reach the thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub min_freq: usize,
    pub min_degree: f64,
    labels: LabelSpace,
    entries: BTreeMap<String, BiasEntry>,
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    word: String,
    label: String,
    degree: f64,
    freq: usize,
}

impl BiasTable {
    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn get(&self, word: &str) -> Option<&BiasEntry> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BiasEntry)> {
        self.entries.iter().map(|(w, e)| (w.as_str(), e))
    }

    /// Number of biased words per argmax label, in label-space order.
    pub fn per_label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for e in self.entries.values() {
            counts[e.label] += 1;
        }
        counts
    }

    /// Highest example frequency among biased words (0 for an empty table).
    pub fn max_freq(&self) -> usize {
        self.entries.values().map(|e| e.freq).max().unwrap_or(0)
    }

    /// Distinct biased words of an example, lexically ordered.
    pub fn biased_words_in<'a>(&self, example: &'a Example) -> Vec<&'a str> {
        example
            .word_set()
            .into_iter()
            .filter(|w| self.contains(w))
            .collect()
    }

    /// Builds a table from explicit entries, checking the threshold invariant.
    pub fn from_entries(
        labels: LabelSpace,
        min_freq: usize,
        min_degree: f64,
        entries: impl IntoIterator<Item = (String, BiasEntry)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (word, e) in entries {
            if e.label >= labels.len() {
                return Err(Error::Config(format!("word {word:?}: label index {} out of range", e.label)));
            }
            if e.freq < min_freq || e.degree < min_degree || !(0.0..=1.0).contains(&e.degree) {
                return Err(Error::Config(format!(
                    "word {word:?} (f={}, d={}) violates thresholds f>={min_freq}, d>={min_degree}",
                    e.freq, e.degree
                )));
            }
            map.insert(word, e);
        }
        Ok(Self {
            min_freq,
            min_degree,
            labels,
            entries: map,
        })
    }

    /// One JSON record per line: word, argmax label, degree (6 decimals), freq.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (word, e) in &self.entries {
            let line = format!(
                "{{\"word\":{},\"label\":{},\"degree\":{:.6},\"freq\":{}}}\n",
                serde_json::to_string(word)?,
                serde_json::to_string(self.labels.name(e.label))?,
                e.degree,
                e.freq
            );
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(
        path: impl AsRef<Path>,
        labels: &LabelSpace,
        min_freq: usize,
        min_degree: f64,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TableRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            let label = labels.index_of(&rec.label).ok_or(Error::UnknownLabel {
                line: i + 1,
                label: rec.label,
            })?;
            entries.push((
                rec.word,
                BiasEntry {
                    label,
                    degree: rec.degree,
                    freq: rec.freq,
                },
            ));
        }
        Self::from_entries(labels.clone(), min_freq, min_degree, entries)
    }
}

/// Selects words with `f >= min_freq` and `max_c d(w, c) >= min_degree`.
pub fn detect_biased_words(
    stats: &WordStatsMap,
    labels: &LabelSpace,
    min_freq: usize,
    min_degree: f64,
) -> Result<BiasTable> {
    if min_freq < 1 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    if !(min_degree > 0.0 && min_degree <= 1.0) {
        return Err(Error::Config(format!("min_degree {min_degree} outside (0, 1]")));
    }
    let entries = stats
        .iter()
        .filter(|(_, s)| s.example_freq >= min_freq)
        .filter_map(|(w, s)| {
            let (label, degree) = s.argmax();
            (degree >= min_degree).then(|| {
                (
                    w.clone(),
                    BiasEntry {
                        label,
                        degree,
                        freq: s.example_freq,
                    },
                )
            })
        })
        .collect::<BTreeMap<_, _>>();
    Ok(BiasTable {
        min_freq,
        min_degree,
        labels: labels.clone(),
        entries,
    })
}

/// Per-example biased-word lists and the biased / unbiased split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasPartition {
    /// Distinct biased words per example, aligned with the dataset.
    pub words: Vec<Vec<String>>,
    pub biased: Vec<usize>,
    pub unbiased: Vec<usize>,
}

impl BiasPartition {
    pub fn is_biased(&self, position: usize) -> bool {
        !self.words[position].is_empty()
    }

    pub fn biased_ids<'a>(&self, dataset: &'a Dataset) -> BTreeSet<&'a str> {
        self.biased
            .iter()
            .map(|&i| dataset.examples()[i].id.as_str())
            .collect()
    }
}

pub fn mark_biased_examples(dataset: &Dataset, table: &BiasTable) -> BiasPartition {
    let words: Vec<Vec<String>> = dataset
        .examples()
        .par_iter()
        .map(|ex| table.biased_words_in(ex).into_iter().map(str::to_owned).collect())
        .collect();
    let (biased, unbiased) = (0..dataset.len()).partition(|&i| !words[i].is_empty());
    BiasPartition {
        words,
        biased,
        unbiased,
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 / total as f64 * 10000.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub min_freq: usize,
    pub min_degree: f64,
    pub total_words: usize,
    pub biased_words: usize,
    pub biased_words_per_label: BTreeMap<String, usize>,
    /// Percent, two decimals.
    pub biased_word_pct: f64,
    pub total_examples: usize,
    pub biased_examples: usize,
    /// Percent, two decimals.
    pub biased_example_pct: f64,
    pub examples_per_label: BTreeMap<String, usize>,
}

impl StatsReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn summarize(dataset: &Dataset, table: &BiasTable) -> StatsReport {
    let labels = dataset.labels();
    let partition = mark_biased_examples(dataset, table);
    let total_words = dataset
        .examples()
        .iter()
        .flat_map(Example::all_tokens)
        .collect::<BTreeSet<_>>()
        .len();
    let per_label = table.per_label_counts();
    StatsReport {
        min_freq: table.min_freq,
        min_degree: table.min_degree,
        total_words,
        biased_words: table.len(),
        biased_words_per_label: labels.iter().map(str::to_owned).zip(per_label).collect(),
        biased_word_pct: pct(table.len(), total_words),
        total_examples: dataset.len(),
        biased_examples: partition.biased.len(),
        biased_example_pct: pct(partition.biased.len(), dataset.len()),
        examples_per_label: labels
            .iter()
            .map(str::to_owned)
            .zip(dataset.label_counts())
            .collect(),
    }
}
