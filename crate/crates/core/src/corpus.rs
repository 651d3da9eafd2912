//! Labeled corpus loading, validation and tokenization.
//!
//! Input is UTF-8 line-delimited JSON, one record per line:
//!
//! ```text
//! {"id": "q1", "text_a": "how to cook rice", "text_b": "rice cooking", "label": 1}
//! ```
//!
//! `text_b` may be `null` or absent for single-sentence tasks, `label` may be a
//! string or an integer, and `tokens_a` / `tokens_b` carry pre-tokenized words.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// Ordered set of label identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidLabelSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// `0, 1, ..., n-1`.
    pub fn numeric(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.labels
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(value: Vec<String>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(value: LabelSpace) -> Self {
        value.labels
    }
}

impl FromStr for LabelSpace {
    type Err = Error;

    /// Comma-separated, e.g. `0,1` or `entailment,neutral,contradiction`.
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.split(',').map(str::trim).filter(|l| !l.is_empty()))
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    Whitespace,
    /// Use the record's `tokens_a` / `tokens_b` fields.
    #[serde(alias = "pretok")]
    PreTokenized,
    /// One token per extended grapheme cluster.
    Char,
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(Self::Whitespace),
            "pretok" | "pre-tokenized" => Ok(Self::PreTokenized),
            "char" => Ok(Self::Char),
            other => Err(Error::Config(format!("unknown tokenizer mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
    pub lowercase: bool,
    /// Only consulted by the explainer's random-word baseline.
    #[serde(default)]
    pub stopwords: Option<BTreeSet<String>>,
}

impl TokenizerSpec {
    pub fn new(mode: TokenizerMode) -> Self {
        Self {
            mode,
            lowercase: false,
            stopwords: None,
        }
    }

    pub fn whitespace() -> Self {
        Self::new(TokenizerMode::Whitespace)
    }

    pub fn pretokenized() -> Self {
        Self::new(TokenizerMode::PreTokenized)
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords = Some(words.into_iter().map(Into::into).collect());
        self
    }
}

/// Splits `text` into words. Pre-tokenized mode falls back to whitespace
/// splitting since the text of a pre-tokenized record is space-joined.
pub fn tokenize(text: &str, spec: &TokenizerSpec) -> Vec<String> {
    let tokens: Vec<String> = match spec.mode {
        TokenizerMode::Whitespace | TokenizerMode::PreTokenized => {
            text.split_whitespace().map(str::to_owned).collect()
        }
        TokenizerMode::Char => text
            .graphemes(true)
            .filter(|g| !g.chars().all(char::is_whitespace))
            .map(str::to_owned)
            .collect(),
    };
    if spec.lowercase {
        tokens.into_iter().map(|t| t.to_lowercase()).collect()
    } else {
        tokens
    }
}

/// One labeled instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: String,
    pub tokens_a: Vec<String>,
    pub tokens_b: Option<Vec<String>>,
}

impl Example {
    /// Builds an example from pre-split tokens; texts are the space-joined tokens.
    pub fn from_tokens(
        id: impl Into<String>,
        tokens_a: Vec<String>,
        tokens_b: Option<Vec<String>>,
        label: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text_a: tokens_a.join(" "),
            text_b: tokens_b.as_ref().map(|t| t.join(" ")),
            label: label.into(),
            tokens_a,
            tokens_b,
        }
    }

    pub fn is_pair(&self) -> bool {
        self.tokens_b.is_some()
    }

    /// Tokens of both sentences, `a` first.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens_a
            .iter()
            .chain(self.tokens_b.iter().flatten())
            .map(String::as_str)
    }

    /// Distinct words in order of first appearance.
    pub fn distinct_words(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.all_tokens().filter(|t| seen.insert(*t)).collect()
    }

    /// Distinct words in lexical order.
    pub fn word_set(&self) -> BTreeSet<&str> {
        self.all_tokens().collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Str(String),
    Int(i64),
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text_a: String,
    #[serde(default)]
    text_b: Option<String>,
    label: RawLabel,
    #[serde(default)]
    tokens_a: Option<Vec<String>>,
    #[serde(default)]
    tokens_b: Option<Vec<String>>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    text_a: &'a str,
    text_b: Option<&'a str>,
    label: &'a str,
    tokens_a: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens_b: Option<&'a [String]>,
}

/// A validated collection of examples over a label space.
#[derive(Debug, Clone)]
pub struct Dataset {
    labels: LabelSpace,
    examples: Vec<Example>,
    label_ids: Vec<usize>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.examples == other.examples
    }
}

impl Dataset {
    pub fn new(labels: LabelSpace, examples: Vec<Example>) -> Result<Self> {
        let mut label_ids = Vec::with_capacity(examples.len());
        let mut by_id = HashMap::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if ex.id.is_empty() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "empty id".into(),
                });
            }
            let li = labels.index_of(&ex.label).ok_or_else(|| Error::UnknownLabel {
                line: i + 1,
                label: ex.label.clone(),
            })?;
            if ex.tokens_a.is_empty() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("example {:?} has no tokens in text_a", ex.id),
                });
            }
            if ex.text_b.is_some() != ex.tokens_b.is_some() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "tokens_b must be present iff text_b is present".into(),
                });
            }
            if by_id.insert(ex.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            label_ids.push(li);
        }
        Ok(Self {
            labels,
            examples,
            label_ids,
            by_id,
        })
    }

    pub fn load(path: impl AsRef<Path>, tokenizer: &TokenizerSpec, labels: &LabelSpace) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), tokenizer, labels).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn from_reader(reader: impl BufRead, tokenizer: &TokenizerSpec, labels: &LabelSpace) -> Result<Self> {
        let lines = reader
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::io("<reader>", e))?;
        let parsed: Vec<Option<Result<Example>>> = lines
            .par_iter()
            .enumerate()
            .map(|(i, line)| {
                if line.trim().is_empty() {
                    None
                } else {
                    Some(parse_record(line, i + 1, tokenizer, labels))
                }
            })
            .collect();

        let mut examples = Vec::with_capacity(parsed.len());
        let mut seen = HashMap::new();
        for (i, item) in parsed.into_iter().enumerate() {
            let Some(ex) = item else { continue };
            let ex = ex?;
            if seen.insert(ex.id.clone(), i + 1).is_some() {
                return Err(Error::DuplicateId(ex.id));
            }
            examples.push(ex);
        }
        Self::new(labels.clone(), examples)
    }

    /// Like [`Dataset::load`], but the label space is the sorted set of labels found in the file.
    pub fn load_infer_labels(path: impl AsRef<Path>, tokenizer: &TokenizerSpec) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut found = BTreeSet::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            found.insert(raw_label(rec.label));
        }
        let labels = LabelSpace::new(found)?;
        Self::load(path, tokenizer, &labels)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for ex in &self.examples {
            let rec = OutRecord {
                id: &ex.id,
                text_a: &ex.text_a,
                text_b: ex.text_b.as_deref(),
                label: &ex.label,
                tokens_a: &ex.tokens_a,
                tokens_b: ex.tokens_b.as_deref(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Label index of the example at position `i`.
    pub fn label_id(&self, i: usize) -> usize {
        self.label_ids[i]
    }

    pub fn label_ids(&self) -> &[usize] {
        &self.label_ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.position(id).map(|i| &self.examples[i])
    }

    /// Number of examples per label, in label-space order.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &l in &self.label_ids {
            counts[l] += 1;
        }
        counts
    }

    /// True when every example is a sentence pair.
    pub fn is_pair(&self) -> bool {
        !self.examples.is_empty() && self.examples.iter().all(Example::is_pair)
    }

    /// New dataset holding the examples at `positions`, in that order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let examples: Vec<Example> = positions.iter().map(|&i| self.examples[i].clone()).collect();
        Dataset::new(self.labels.clone(), examples).expect("subset of a valid dataset is valid")
    }
}

fn raw_label(label: RawLabel) -> String {
    match label {
        RawLabel::Str(s) => s,
        RawLabel::Int(i) => i.to_string(),
    }
}

fn parse_record(line: &str, lineno: usize, tokenizer: &TokenizerSpec, labels: &LabelSpace) -> Result<Example> {
    let rec: RawRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
        line: lineno,
        message: e.to_string(),
    })?;
    if rec.id.is_empty() {
        return Err(Error::Malformed {
            line: lineno,
            message: "empty id".into(),
        });
    }
    let label = raw_label(rec.label);
    if labels.index_of(&label).is_none() {
        return Err(Error::UnknownLabel { line: lineno, label });
    }

    let (tokens_a, tokens_b) = match tokenizer.mode {
        TokenizerMode::PreTokenized => {
            let a = rec.tokens_a.ok_or_else(|| Error::Malformed {
                line: lineno,
                message: "pre-tokenized mode requires tokens_a".into(),
            })?;
            let b = match (&rec.text_b, rec.tokens_b) {
                (Some(_), Some(b)) => Some(b),
                (Some(_), None) => {
                    return Err(Error::Malformed {
                        line: lineno,
                        message: "pre-tokenized mode requires tokens_b for sentence pairs".into(),
                    })
                }
                (None, Some(_)) => {
                    return Err(Error::Malformed {
                        line: lineno,
                        message: "tokens_b given without text_b".into(),
                    })
                }
                (None, None) => None,
            };
            let fold = |v: Vec<String>| -> Vec<String> {
                if tokenizer.lowercase {
                    v.into_iter().map(|t| t.to_lowercase()).collect()
                } else {
                    v
                }
            };
            (fold(a), b.map(fold))
        }
        _ => (
            tokenize(&rec.text_a, tokenizer),
            rec.text_b.as_deref().map(|t| tokenize(t, tokenizer)),
        ),
    };
    if tokens_a.is_empty() {
        return Err(Error::Malformed {
            line: lineno,
            message: "text_a has no tokens".into(),
        });
    }

    Ok(Example {
        id: rec.id,
        text_a: rec.text_a,
        text_b: rec.text_b,
        label,
        tokens_a,
        tokens_b,
    })
}
