//! Word-contribution rankings: LIME-style local surrogates and occlusion.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};
use crate::stats::BiasTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Lime,
    Occlusion,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lime" => Ok(Self::Lime),
            "occlusion" => Ok(Self::Occlusion),
            other => Err(Error::Config(format!("unknown explanation method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lime => "lime",
            Self::Occlusion => "occlusion",
        })
    }
}

pub const RIDGE_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub n_samples: usize,
    /// `None`: 0.75 * sqrt(number of distinct words).
    pub kernel_width: Option<f64>,
    pub seed: u64,
    pub method: Method,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            seed: 0,
            method: Method::Lime,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::Config(format!("n_samples {} is below 10", self.n_samples)));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("kernel width {w} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRanking {
    pub id: String,
    pub method: Method,
    pub seed: u64,
    /// Predicted label the contributions point toward.
    pub label: String,
    /// Descending `|score|`, ties broken by word.
    pub contributions: Vec<(String, f64)>,
}

impl ContributionRanking {
    fn new(id: &str, method: Method, seed: u64, label: &str, mut contributions: Vec<(String, f64)>) -> Self {
        contributions.sort_by(|(wa, a), (wb, b)| b.abs().total_cmp(&a.abs()).then_with(|| wa.cmp(wb)));
        Self {
            id: id.to_owned(),
            method,
            seed,
            label: label.to_owned(),
            contributions,
        }
    }

    /// 1-based rank of `word`.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.contributions.iter().position(|(w, _)| w == word).map(|i| i + 1)
    }

    pub fn top(&self) -> Option<&str> {
        self.contributions.first().map(|(w, _)| w.as_str())
    }

    pub fn score(&self, word: &str) -> Option<f64> {
        self.contributions.iter().find(|(w, _)| w == word).map(|(_, s)| *s)
    }
}

pub fn write_rankings(rankings: &[ContributionRanking], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rankings {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rankings(path: impl AsRef<Path>) -> Result<Vec<ContributionRanking>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Per-example seed so that parallel and serial runs agree.
pub fn example_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Model probabilities with only the words in `keep` retained, in both texts.
fn predict_kept(model: &dyn Classifier, example: &Example, keep: &dyn Fn(&str) -> bool) -> Vec<f64> {
    let filter = |tokens: &[String]| tokens.iter().filter(|t| keep(t)).cloned().collect::<Vec<_>>();
    let a = filter(&example.tokens_a);
    let b = example.tokens_b.as_deref().map(filter);
    model.predict_proba(&a, b.as_deref())
}

pub fn lime_explain(model: &dyn Classifier, example: &Example, config: &ExplainerConfig) -> Result<ContributionRanking> {
    config.validate()?;
    let full = model.predict_example(example);
    let pred = argmax(&full);
    let label = model.labels().name(pred);
    let words: Vec<String> = example.distinct_words().into_iter().map(String::from).collect();
    let n = words.len();
    if n <= 1 {
        let contributions = words
            .into_iter()
            .map(|w| {
                let empty = predict_kept(model, example, &|_| false);
                (w, full[pred] - empty[pred])
            })
            .collect();
        return Ok(ContributionRanking::new(&example.id, Method::Lime, config.seed, label, contributions));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(example_seed(config.seed, &example.id));
    let width = config.kernel_width.unwrap_or(0.75 * (n as f64).sqrt());
    let m = config.n_samples;
    let mut x = DMatrix::<f64>::zeros(m, n + 1);
    let mut y = DVector::<f64>::zeros(m);
    let mut pi = DVector::<f64>::zeros(m);
    let mut mask = vec![true; n];
    for s in 0..m {
        if s > 0 {
            mask.iter_mut().for_each(|b| *b = rng.gen_bool(0.5));
        }
        let kept: BTreeSet<&str> = words
            .iter()
            .zip(&mask)
            .filter(|(_, &k)| k)
            .map(|(w, _)| w.as_str())
            .collect();
        let on = kept.len();
        y[s] = if on == n {
            full[pred]
        } else {
            predict_kept(model, example, &|t| kept.contains(t))[pred]
        };
        // cosine distance between the mask and the all-ones vector
        let distance = if on == 0 { 1.0 } else { 1.0 - (on as f64 / n as f64).sqrt() };
        pi[s] = (-(distance * distance) / (width * width)).exp().sqrt();
        x[(s, 0)] = 1.0;
        for (j, &k) in mask.iter().enumerate() {
            x[(s, j + 1)] = f64::from(u8::from(k));
        }
    }

    let xw = DMatrix::from_fn(m, n + 1, |r, c| x[(r, c)] * pi[r]);
    let mut gram = x.transpose() * &xw;
    for j in 1..=n {
        gram[(j, j)] += RIDGE_LAMBDA;
    }
    let rhs = xw.transpose() * &y;
    let coef = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Config(format!("surrogate fit failed for {:?}", example.id)))?;

    let contributions = words.into_iter().enumerate().map(|(j, w)| (w, coef[j + 1])).collect();
    Ok(ContributionRanking::new(&example.id, Method::Lime, config.seed, label, contributions))
}

/// `p(pred | full) - p(pred | word removed everywhere)` for every distinct word.
pub fn occlusion_explain(model: &dyn Classifier, example: &Example) -> ContributionRanking {
    let full = model.predict_example(example);
    let pred = argmax(&full);
    let contributions = example
        .distinct_words()
        .into_iter()
        .map(|w| {
            let p = predict_kept(model, example, &|t| t != w);
            (w.to_owned(), full[pred] - p[pred])
        })
        .collect();
    ContributionRanking::new(&example.id, Method::Occlusion, 0, model.labels().name(pred), contributions)
}

pub fn explain(model: &dyn Classifier, example: &Example, config: &ExplainerConfig) -> Result<ContributionRanking> {
    match config.method {
        Method::Lime => lime_explain(model, example, config),
        Method::Occlusion => {
            let mut r = occlusion_explain(model, example);
            r.seed = config.seed;
            Ok(r)
        }
    }
}

/// Rankings for the examples at `positions`, in that order.
pub fn explain_positions(
    model: &dyn Classifier,
    dataset: &Dataset,
    positions: &[usize],
    config: &ExplainerConfig,
) -> Result<Vec<ContributionRanking>> {
    config.validate()?;
    positions
        .par_iter()
        .map(|&i| explain(model, &dataset.examples()[i], config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRatios {
    pub k: usize,
    /// `biased[r - 1]`: share of rankings with a biased word at rank `<= r`.
    pub biased: Vec<f64>,
    /// Same measurement for one uniformly chosen non-stopword per example.
    pub random: Vec<f64>,
    /// Rankings long enough to have a rank `r` entry.
    pub counted: Vec<usize>,
}

pub fn top_k_bias_ratio(
    rankings: &[ContributionRanking],
    table: &BiasTable,
    k: usize,
    baseline_seed: u64,
    stopwords: &BTreeSet<String>,
) -> TopKRatios {
    let mut biased_hits = vec![0usize; k];
    let mut random_hits = vec![0usize; k];
    let mut counted = vec![0usize; k];
    for r in rankings {
        let best_biased = r.contributions.iter().position(|(w, _)| table.contains(w));
        let candidates: Vec<usize> = (0..r.contributions.len())
            .filter(|&i| !stopwords.contains(&r.contributions[i].0))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(example_seed(baseline_seed, &r.id));
        let random_pos = candidates.choose(&mut rng).copied();
        for rank in 1..=k.min(r.contributions.len()) {
            counted[rank - 1] += 1;
            if best_biased.is_some_and(|p| p < rank) {
                biased_hits[rank - 1] += 1;
            }
            if random_pos.is_some_and(|p| p < rank) {
                random_hits[rank - 1] += 1;
            }
        }
    }
    let ratio = |hits: &[usize]| -> Vec<f64> {
        hits.iter()
            .zip(&counted)
            .map(|(&h, &c)| if c == 0 { 0.0 } else { h as f64 / c as f64 })
            .collect()
    };
    TopKRatios {
        k,
        biased: ratio(&biased_hits),
        random: ratio(&random_hits),
        counted,
    }
}

/// Biased examples whose rank-1 word is a biased word.
pub fn find_focus_biased(dataset: &Dataset, rankings: &[ContributionRanking], table: &BiasTable) -> BTreeSet<String> {
    let by_id: HashMap<&str, &ContributionRanking> = rankings.iter().map(|r| (r.id.as_str(), r)).collect();
    dataset
        .examples()
        .iter()
        .filter(|e| !table.biased_words_in(e).is_empty())
        .filter(|e| {
            by_id
                .get(e.id.as_str())
                .and_then(|r| r.top())
                .is_some_and(|w| table.contains(w))
        })
        .map(|e| e.id.clone())
        .collect()
}
