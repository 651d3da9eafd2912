//! Synthetic corpora with planted word-label biases and controllable pair overlap.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, LabelSpace};
use crate::error::{Error, Result};
use crate::overlap::levenshtein;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub word: String,
    pub label: usize,
    pub degree: f64,
    pub freq: usize,
}

/// Plants generated from a target biased-example share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoPlants {
    pub count: usize,
    pub degree: f64,
    /// Fraction of training examples carrying a planted word.
    pub share: f64,
    /// Target labels, cycled; empty means all labels in turn.
    #[serde(default)]
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub labels: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Defaults to `test_size`.
    pub adversarial_size: Option<usize>,
    /// Bias-free signal words; word `i` votes for label `i % labels`.
    pub signal_vocab: usize,
    pub signals_per_example: usize,
    pub filler_vocab: usize,
    pub fillers_per_example: usize,
    pub plants: Vec<PlantSpec>,
    pub auto_plants: Option<AutoPlants>,
    pub pair_task: bool,
    /// `overlap[label][k]`: relative weight of `k` edits between the two texts.
    pub overlap: Option<Vec<Vec<f64>>>,
    pub adversarial_flip_rate: f64,
    pub min_freq: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            labels: 2,
            train_size: 10_000,
            test_size: 2_000,
            adversarial_size: None,
            signal_vocab: 200,
            signals_per_example: 5,
            filler_vocab: 100,
            fillers_per_example: 6,
            plants: Vec::new(),
            auto_plants: None,
            pair_task: false,
            overlap: None,
            adversarial_flip_rate: 1.0,
            min_freq: 3,
        }
    }
}

impl SynthConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Explicit plants followed by the auto-generated ones.
    pub fn resolved_plants(&self) -> Result<Vec<PlantSpec>> {
        let mut plants = self.plants.clone();
        if let Some(auto) = &self.auto_plants {
            if auto.count == 0 {
                return Err(Error::Config("auto_plants.count must be positive".into()));
            }
            if !(0.0..=1.0).contains(&auto.share) {
                return Err(Error::Config(format!("share {} outside [0, 1]", auto.share)));
            }
            let total = (auto.share * self.train_size as f64).round() as usize;
            let targets: Vec<usize> = if auto.labels.is_empty() {
                (0..self.labels).collect()
            } else {
                auto.labels.clone()
            };
            for i in 0..auto.count {
                let freq = total / auto.count + usize::from(i < total % auto.count);
                plants.push(PlantSpec {
                    word: format!("p{i}"),
                    label: targets[i % targets.len()],
                    degree: auto.degree,
                    freq,
                });
            }
        }
        Ok(plants)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels < 2 {
            return Err(Error::Config("at least two labels are required".into()));
        }
        if self.train_size == 0 {
            return Err(Error::Config("train_size must be positive".into()));
        }
        if self.signals_per_example == 0 || self.signal_vocab < self.labels * self.signals_per_example {
            return Err(Error::Config(format!(
                "signal_vocab {} too small for {} signals per example",
                self.signal_vocab, self.signals_per_example
            )));
        }
        if self.fillers_per_example > 0 && self.filler_vocab < 2 {
            return Err(Error::Config("filler_vocab must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.adversarial_flip_rate) {
            return Err(Error::Config(format!(
                "adversarial_flip_rate {} outside [0, 1]",
                self.adversarial_flip_rate
            )));
        }
        if let Some(overlap) = &self.overlap {
            if overlap.len() != self.labels
                || overlap
                    .iter()
                    .any(|w| w.is_empty() || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0)
            {
                return Err(Error::Config("overlap needs one non-negative, non-zero weight row per label".into()));
            }
        }
        let plants = self.resolved_plants()?;
        let mut seen = HashSet::new();
        let mut per_label = vec![0usize; self.labels];
        let mut total = 0;
        for p in &plants {
            if !seen.insert(p.word.as_str()) {
                return Err(Error::Config(format!("planted word {:?} listed twice", p.word)));
            }
            if p.label >= self.labels {
                return Err(Error::Config(format!("plant {:?} targets label {} out of range", p.word, p.label)));
            }
            if !(p.degree > 0.5 && p.degree <= 1.0) {
                return Err(Error::Config(format!("plant {:?}: degree {} outside (0.5, 1]", p.word, p.degree)));
            }
            if p.freq < self.min_freq {
                return Err(Error::Config(format!(
                    "plant {:?}: frequency {} below min_freq {}",
                    p.word, p.freq, self.min_freq
                )));
            }
            let on_target = target_count(p);
            if (on_target as f64 / p.freq as f64 - p.degree).abs() > 1.0 / p.freq as f64 {
                return Err(Error::Infeasible(format!("plant {:?}: degree {} unreachable", p.word, p.degree)));
            }
            per_label[p.label] += on_target;
            total += p.freq;
        }
        if total > self.train_size {
            return Err(Error::Infeasible(format!(
                "plants need {total} examples but train_size is {}",
                self.train_size
            )));
        }
        let expected = self.train_size / self.labels;
        if let Some(l) = per_label.iter().position(|&n| n * 10 > expected * 9) {
            return Err(Error::Infeasible(format!(
                "plants need {} examples of label {l}, about {expected} exist",
                per_label[l]
            )));
        }
        Ok(())
    }
}

fn target_count(p: &PlantSpec) -> usize {
    (p.degree * p.freq as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub word: String,
    pub label: String,
    pub target_degree: f64,
    pub target_freq: usize,
    /// Training examples carrying the word with the target label.
    pub on_target: usize,
    pub test_freq: usize,
    pub adversarial_freq: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub labels: LabelSpace,
    pub plants: Vec<PlantRecord>,
    /// Signal words with the label each one votes for.
    pub signal_words: Vec<(String, String)>,
    pub train_size: usize,
    pub test_size: usize,
    pub adversarial_size: usize,
    /// Adversarial examples whose planted word contradicts the gold label.
    pub adversarial_flipped: usize,
}

impl SynthManifest {
    pub fn plant(&self, word: &str) -> Option<&PlantRecord> {
        self.plants.iter().find(|p| p.word == word)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Dataset,
    pub test: Dataset,
    pub adversarial: Dataset,
    pub manifest: SynthManifest,
}

impl SynthCorpus {
    /// `train.jsonl`, `test.jsonl`, `adversarial.jsonl` and `manifest.json`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.write_jsonl(dir.join("train.jsonl"))?;
        self.test.write_jsonl(dir.join("test.jsonl"))?;
        self.adversarial.write_jsonl(dir.join("adversarial.jsonl"))?;
        let path = dir.join("synth_manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Tokens of one example before any plant is inserted.
struct Base {
    label: usize,
    tokens: Vec<String>,
    /// Positions holding filler words.
    fillers: Vec<bool>,
}

struct Generator<'a> {
    config: &'a SynthConfig,
    rng: ChaCha8Rng,
    signals_by_label: Vec<Vec<String>>,
    seen: HashSet<Vec<String>>,
}

impl Generator<'_> {
    fn signal_votes(&mut self, label: usize) -> Vec<usize> {
        let k = self.config.labels;
        loop {
            let votes: Vec<usize> = (0..self.config.signals_per_example)
                .map(|_| self.rng.gen_range(0..k))
                .collect();
            let mut counts = vec![0; k];
            for &v in &votes {
                counts[v] += 1;
            }
            let top = *counts.iter().max().unwrap();
            if counts[label] == top && counts.iter().filter(|&&c| c == top).count() == 1 {
                return votes;
            }
        }
    }

    /// A base example with gold `label`, unique across every split.
    fn base(&mut self, label: usize) -> Base {
        loop {
            let votes = self.signal_votes(label);
            let mut tokens: Vec<(String, bool)> = Vec::new();
            for l in 0..self.config.labels {
                let n = votes.iter().filter(|&&v| v == l).count();
                for w in self.signals_by_label[l].choose_multiple(&mut self.rng, n) {
                    tokens.push((w.clone(), false));
                }
            }
            for _ in 0..self.config.fillers_per_example {
                tokens.push((format!("f{}", self.rng.gen_range(0..self.config.filler_vocab)), true));
            }
            tokens.shuffle(&mut self.rng);
            let (tokens, fillers): (Vec<String>, Vec<bool>) = tokens.into_iter().unzip();
            if self.seen.insert(tokens.clone()) {
                return Base { label, tokens, fillers };
            }
        }
    }

    fn balanced_labels(&mut self, n: usize) -> Vec<usize> {
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.config.labels).collect();
        labels.shuffle(&mut self.rng);
        labels
    }

    /// Inserts `word` at a random position; the new token is protected from edits.
    fn plant(&mut self, base: &mut Base, word: &str) {
        let at = self.rng.gen_range(0..=base.tokens.len());
        base.tokens.insert(at, word.to_owned());
        base.fillers.insert(at, false);
    }

    /// Second text: `k` edits restricted to filler positions.
    fn derive_b(&mut self, base: &Base) -> Vec<String> {
        let weights = match &self.config.overlap {
            Some(rows) => rows[base.label].clone(),
            None => vec![1.0; 4],
        };
        let k = WeightedIndex::new(&weights).expect("validated").sample(&mut self.rng);
        let mut slots: Vec<usize> = (0..base.tokens.len()).filter(|&i| base.fillers[i]).collect();
        slots.shuffle(&mut self.rng);
        // None = deleted
        let mut out: Vec<Option<String>> = base.tokens.iter().cloned().map(Some).collect();
        let mut inserts: Vec<(usize, String)> = Vec::new();
        for _ in 0..k {
            let fresh = format!("f{}", self.rng.gen_range(0..self.config.filler_vocab));
            match (slots.pop(), self.rng.gen_range(0..3)) {
                (Some(i), 0) => {
                    let old = out[i].clone().unwrap();
                    let mut new = fresh;
                    while new == old {
                        new = format!("f{}", self.rng.gen_range(0..self.config.filler_vocab));
                    }
                    out[i] = Some(new);
                }
                (Some(i), 1) => out[i] = None,
                (slot, _) => {
                    if let Some(i) = slot {
                        slots.push(i);
                    }
                    inserts.push((self.rng.gen_range(0..=out.len()), fresh));
                }
            }
        }
        let mut b: Vec<String> = Vec::new();
        for i in 0..=out.len() {
            for (_, w) in inserts.iter().filter(|(at, _)| *at == i) {
                b.push(w.clone());
            }
            if let Some(Some(w)) = out.get(i) {
                b.push(w.clone());
            }
        }
        b
    }

    fn finish(&mut self, id: String, base: Base, labels: &LabelSpace) -> Example {
        let b = self.config.pair_task.then(|| self.derive_b(&base));
        Example::from_tokens(id, base.tokens, b, labels.name(base.label))
    }

    /// Split with plants placed on disjoint examples; returns examples and realized counts.
    fn planted_split(
        &mut self,
        prefix: &str,
        size: usize,
        plants: &[(String, usize, usize, usize)],
        labels: &LabelSpace,
    ) -> Result<Vec<Example>> {
        let gold = self.balanced_labels(size);
        let mut bases: Vec<Base> = gold.into_iter().map(|l| self.base(l)).collect();
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); self.config.labels];
        for (i, b) in bases.iter().enumerate() {
            pools[b.label].push(i);
        }
        for pool in &mut pools {
            pool.shuffle(&mut self.rng);
        }
        for (word, label, on_target, freq) in plants {
            let mut off = vec![0usize; self.config.labels];
            let others: Vec<usize> = (0..self.config.labels).filter(|l| l != label).collect();
            for j in 0..freq - on_target {
                off[others[j % others.len()]] += 1;
            }
            off[*label] = *on_target;
            for (l, &n) in off.iter().enumerate() {
                for _ in 0..n {
                    let i = pools[l].pop().ok_or_else(|| {
                        Error::Infeasible(format!("{prefix} split ran out of label-{l} examples for {word:?}"))
                    })?;
                    self.plant(&mut bases[i], word);
                }
            }
        }
        Ok(bases
            .into_iter()
            .enumerate()
            .map(|(i, b)| self.finish(format!("{prefix}-{:06}", i + 1), b, labels))
            .collect())
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let plants = config.resolved_plants()?;
    let labels = LabelSpace::numeric(config.labels)?;
    let mut signals_by_label = vec![Vec::new(); config.labels];
    let mut signal_words = Vec::new();
    for i in 0..config.signal_vocab {
        let w = format!("s{i}");
        signals_by_label[i % config.labels].push(w.clone());
        signal_words.push((w, labels.name(i % config.labels).to_owned()));
    }
    let mut g = Generator {
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        signals_by_label,
        seen: HashSet::new(),
    };

    let train_plants: Vec<(String, usize, usize, usize)> = plants
        .iter()
        .map(|p| (p.word.clone(), p.label, target_count(p), p.freq))
        .collect();
    let train = g.planted_split("train", config.train_size, &train_plants, &labels)?;

    let scale = config.test_size as f64 / config.train_size as f64;
    let test_plants: Vec<(String, usize, usize, usize)> = plants
        .iter()
        .map(|p| {
            let freq = (p.freq as f64 * scale).round() as usize;
            let on_target = ((p.degree * freq as f64).round() as usize).min(freq);
            (p.word.clone(), p.label, on_target, freq)
        })
        .collect();
    let test = g.planted_split("test", config.test_size, &test_plants, &labels)?;

    let adv_size = config.adversarial_size.unwrap_or(config.test_size);
    let n_flip = (config.adversarial_flip_rate * adv_size as f64).round() as usize;
    let mut flips: Vec<bool> = (0..adv_size).map(|i| i < n_flip).collect();
    flips.shuffle(&mut g.rng);
    let plain_gold = g.balanced_labels(adv_size);
    let mut adversarial = Vec::with_capacity(adv_size);
    let mut adv_freq = vec![0usize; plants.len()];
    let mut flipped = 0;
    for (i, flip) in flips.into_iter().enumerate() {
        let base = if plants.is_empty() {
            g.base(plain_gold[i])
        } else {
            // plants cycle; gold follows or contradicts the plant's label
            let j = i % plants.len();
            let target = plants[j].label;
            let label = if flip {
                let others: Vec<usize> = (0..config.labels).filter(|&l| l != target).collect();
                flipped += 1;
                *others.choose(&mut g.rng).unwrap()
            } else {
                target
            };
            let mut base = g.base(label);
            adv_freq[j] += 1;
            g.plant(&mut base, &plants[j].word);
            base
        };
        adversarial.push(g.finish(format!("adv-{:06}", i + 1), base, &labels));
    }

    let records = plants
        .iter()
        .zip(&test_plants)
        .zip(&adv_freq)
        .map(|((p, t), &a)| PlantRecord {
            word: p.word.clone(),
            label: labels.name(p.label).to_owned(),
            target_degree: p.degree,
            target_freq: p.freq,
            on_target: target_count(p),
            test_freq: t.3,
            adversarial_freq: a,
        })
        .collect();
    let manifest = SynthManifest {
        config: config.clone(),
        labels: labels.clone(),
        plants: records,
        signal_words,
        train_size: train.len(),
        test_size: test.len(),
        adversarial_size: adversarial.len(),
        adversarial_flipped: flipped,
    };
    Ok(SynthCorpus {
        train: Dataset::new(labels.clone(), train)?,
        test: Dataset::new(labels.clone(), test)?,
        adversarial: Dataset::new(labels, adversarial)?,
        manifest,
    })
}

/// Token edit distance between the two texts of a generated pair.
pub fn pair_distance(example: &Example) -> Option<usize> {
    example.tokens_b.as_ref().map(|b| levenshtein(&example.tokens_a, b))
}
