//! Bag-of-words classifier with an optional hidden layer.
//!
//! Features are binary word-presence indicators over a frozen vocabulary.
//! Sentence pairs get one bag per sentence plus the normalized token-level
//! edit distance between them.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, LabelSpace};
use crate::error::{Error, Result};
use crate::overlap::OverlapStats;

const MODEL_FORMAT: &str = "lls-bow-classifier/1";

/// Anything that maps an input to a probability vector over a label space.
pub trait Classifier: Sync {
    fn labels(&self) -> &LabelSpace;

    fn predict_proba(&self, tokens_a: &[String], tokens_b: Option<&[String]>) -> Vec<f64>;

    fn predict_example(&self, example: &Example) -> Vec<f64> {
        self.predict_proba(&example.tokens_a, example.tokens_b.as_deref())
    }
}

/// Index of the largest entry; ties go to the earlier index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// One bag over the words of both sentences.
    Bag,
    /// Separate bags for each sentence, plus the overlap feature.
    PairBags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Linear,
    Hidden { width: usize },
}

/// Word to feature index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut words: Vec<String> = words.into_iter().collect();
        words.sort();
        words.dedup();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(
            dataset
                .examples()
                .iter()
                .flat_map(|e| e.all_tokens().map(str::to_owned)),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Sparse `(index, value)` feature vector.
pub type Features = Vec<(usize, f64)>;

/// Shape of the network, independent of its parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Network {
    pub inputs: usize,
    pub outputs: usize,
    pub arch: Architecture,
}

impl Network {
    pub fn param_count(&self) -> usize {
        match self.arch {
            Architecture::Linear => (self.inputs + 1) * self.outputs,
            Architecture::Hidden { width } => (self.inputs + 1) * width + (width + 1) * self.outputs,
        }
    }

    /// Logits, plus hidden activations for the hidden architecture.
    fn logits(&self, params: &[f64], x: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
        let k = self.outputs;
        match self.arch {
            Architecture::Linear => {
                // layout: weights [inputs x k], then bias [k]
                let bias = &params[self.inputs * k..];
                let mut z = bias.to_vec();
                for &(j, v) in x {
                    let row = &params[j * k..(j + 1) * k];
                    for (zc, w) in z.iter_mut().zip(row) {
                        *zc += w * v;
                    }
                }
                (z, Vec::new())
            }
            Architecture::Hidden { width } => {
                // layout: w1 [inputs x width], b1 [width], w2 [width x k], b2 [k]
                let w1_end = self.inputs * width;
                let b1 = &params[w1_end..w1_end + width];
                let w2 = &params[w1_end + width..w1_end + width + width * k];
                let b2 = &params[w1_end + width + width * k..];
                let mut pre = b1.to_vec();
                for &(j, v) in x {
                    let row = &params[j * width..(j + 1) * width];
                    for (p, w) in pre.iter_mut().zip(row) {
                        *p += w * v;
                    }
                }
                let h: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();
                let mut z = b2.to_vec();
                for (hi, hv) in h.iter().enumerate() {
                    let row = &w2[hi * k..(hi + 1) * k];
                    for (zc, w) in z.iter_mut().zip(row) {
                        *zc += w * hv;
                    }
                }
                (z, h)
            }
        }
    }

    pub fn probs(&self, params: &[f64], x: &[(usize, f64)]) -> Vec<f64> {
        softmax(&self.logits(params, x).0)
    }

    /// Weighted cross-entropy `sum_i w_i * -log p(y_i | x_i) / n` and its
    /// gradient, accumulated into `grad` (which is overwritten).
    pub fn loss_and_grad(&self, params: &[f64], batch: &[(&Features, usize, f64)], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if batch.is_empty() {
            return 0.0;
        }
        let n = batch.len() as f64;
        let k = self.outputs;
        let mut total = 0.0;
        for &(x, y, w) in batch {
            let (z, h) = self.logits(params, x);
            let p = softmax(&z);
            total += w * cross_entropy(&z, y);
            let scale = w / n;
            // dL/dz = scale * (p - onehot)
            let dz: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(c, pc)| scale * (pc - if c == y { 1.0 } else { 0.0 }))
                .collect();
            match self.arch {
                Architecture::Linear => {
                    for &(j, v) in x.iter() {
                        for c in 0..k {
                            grad[j * k + c] += dz[c] * v;
                        }
                    }
                    let b = self.inputs * k;
                    for c in 0..k {
                        grad[b + c] += dz[c];
                    }
                }
                Architecture::Hidden { width } => {
                    let w1_end = self.inputs * width;
                    let w2_start = w1_end + width;
                    let b2_start = w2_start + width * k;
                    let mut dh = vec![0.0; width];
                    for hi in 0..width {
                        for c in 0..k {
                            grad[w2_start + hi * k + c] += dz[c] * h[hi];
                            dh[hi] += dz[c] * params[w2_start + hi * k + c];
                        }
                    }
                    for c in 0..k {
                        grad[b2_start + c] += dz[c];
                    }
                    let dpre: Vec<f64> = dh.iter().zip(&h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
                    for &(j, v) in x.iter() {
                        for hi in 0..width {
                            grad[j * width + hi] += dpre[hi] * v;
                        }
                    }
                    for hi in 0..width {
                        grad[w1_end + hi] += dpre[hi];
                    }
                }
            }
        }
        total / n
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, params: &[f64], batch: &[(&Features, usize, f64)]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|&(x, y, w)| w * cross_entropy(&self.logits(params, x).0, y))
            .sum();
        total / batch.len() as f64
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        match self.arch {
            Architecture::Linear => {
                let n = self.inputs * self.outputs;
                for p in &mut params[..n] {
                    *p = rng.gen_range(-0.01..0.01);
                }
            }
            Architecture::Hidden { width } => {
                let bound1 = (6.0 / (self.inputs + width) as f64).sqrt();
                let w1_end = self.inputs * width;
                for p in &mut params[..w1_end] {
                    *p = rng.gen_range(-bound1..bound1);
                }
                let bound2 = (6.0 / (width + self.outputs) as f64).sqrt();
                let w2_start = w1_end + width;
                for p in &mut params[w2_start..w2_start + width * self.outputs] {
                    *p = rng.gen_range(-bound2..bound2);
                }
            }
        }
        params
    }
}

/// `logsumexp(z) - z[y]`; overflowing logits surface as a non-finite value.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
    m + s.ln() - z[y]
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    labels: LabelSpace,
    vocab: Vocabulary,
    representation: Representation,
    network: Network,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    labels: LabelSpace,
    representation: Representation,
    architecture: Architecture,
    vocabulary: Vec<String>,
    params: Vec<f64>,
}

impl ClassifierModel {
    pub fn input_dim(vocab: &Vocabulary, representation: Representation) -> usize {
        match representation {
            Representation::Bag => vocab.len(),
            Representation::PairBags => 2 * vocab.len() + 1,
        }
    }

    /// A model with the given parameters; their count must match the shape.
    pub fn new(
        labels: LabelSpace,
        vocab: Vocabulary,
        representation: Representation,
        arch: Architecture,
        params: Vec<f64>,
    ) -> Result<Self> {
        let network = Network {
            inputs: Self::input_dim(&vocab, representation),
            outputs: labels.len(),
            arch,
        };
        if params.len() != network.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                network.param_count(),
                params.len()
            )));
        }
        if let Architecture::Hidden { width: 0 } = arch {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(Self {
            labels,
            vocab,
            representation,
            network,
            params,
        })
    }

    /// Linear model whose label-`k` logit is the sum of `coefficients[word][k]`
    /// over the distinct words present.
    pub fn linear_from_coefficients(
        labels: LabelSpace,
        coefficients: &[(String, Vec<f64>)],
        bias: Vec<f64>,
    ) -> Result<Self> {
        let vocab = Vocabulary::new(coefficients.iter().map(|(w, _)| w.clone()));
        let k = labels.len();
        let mut params = vec![0.0; (vocab.len() + 1) * k];
        for (w, c) in coefficients {
            if c.len() != k {
                return Err(Error::Config(format!("coefficient row for {w:?} has wrong length")));
            }
            let j = vocab.get(w).expect("inserted");
            params[j * k..(j + 1) * k].copy_from_slice(c);
        }
        if bias.len() != k {
            return Err(Error::Config("bias has wrong length".into()));
        }
        params[vocab.len() * k..].copy_from_slice(&bias);
        Self::new(labels, vocab, Representation::Bag, Architecture::Linear, params)
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn network(&self) -> Network {
        self.network
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }

    pub fn features(&self, tokens_a: &[String], tokens_b: Option<&[String]>) -> Features {
        let v = self.vocab.len();
        let mut f: Features = Vec::new();
        let push_bag = |tokens: &[String], offset: usize, f: &mut Features| {
            let mut idx: Vec<usize> = tokens.iter().filter_map(|t| self.vocab.get(t)).collect();
            idx.sort_unstable();
            idx.dedup();
            f.extend(idx.into_iter().map(|j| (offset + j, 1.0)));
        };
        match self.representation {
            Representation::Bag => {
                let mut all: Vec<String> = tokens_a.to_vec();
                if let Some(b) = tokens_b {
                    all.extend_from_slice(b);
                }
                push_bag(&all, 0, &mut f);
            }
            Representation::PairBags => {
                push_bag(tokens_a, 0, &mut f);
                let b = tokens_b.unwrap_or(&[]);
                push_bag(b, v, &mut f);
                let o = OverlapStats::between(tokens_a, b);
                if o.normalized_distance != 0.0 {
                    f.push((2 * v, o.normalized_distance));
                }
            }
        }
        f
    }

    pub fn example_features(&self, example: &Example) -> Features {
        self.features(&example.tokens_a, example.tokens_b.as_deref())
    }

    pub fn predict_features(&self, x: &[(usize, f64)]) -> Vec<f64> {
        self.network.probs(&self.params, x)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            labels: self.labels.clone(),
            representation: self.representation,
            architecture: self.network.arch,
            vocabulary: self.vocab.words().to_vec(),
            params: self.params.clone(),
        };
        let mut text = serde_json::to_string(&file)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Config(format!("unsupported model format {:?}", file.format)));
        }
        Self::new(
            file.labels,
            Vocabulary::new(file.vocabulary),
            file.representation,
            file.architecture,
            file.params,
        )
    }
}

impl Classifier for ClassifierModel {
    fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    fn predict_proba(&self, tokens_a: &[String], tokens_b: Option<&[String]>) -> Vec<f64> {
        self.predict_features(&self.features(tokens_a, tokens_b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let vocab = Vocabulary::new(["a", "b", "c"].map(String::from));
        let labels = LabelSpace::numeric(3).unwrap();
        for arch in [Architecture::Linear, Architecture::Hidden { width: 4 }] {
            let net = Network {
                inputs: ClassifierModel::input_dim(&vocab, Representation::PairBags),
                outputs: 3,
                arch,
            };
            let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(1));
            let m = ClassifierModel::new(labels.clone(), vocab.clone(), Representation::PairBags, arch, params).unwrap();
            let p = m.predict_proba(&toks("a b zz"), Some(&toks("c a")));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p, m.predict_proba(&toks("a b zz"), Some(&toks("c a"))));
        }
    }

    #[test]
    fn pair_features_layout() {
        let vocab = Vocabulary::new(["a", "b"].map(String::from));
        let net_params = vec![0.0; (2 * 2 + 1 + 1) * 2];
        let m = ClassifierModel::new(
            LabelSpace::numeric(2).unwrap(),
            vocab,
            Representation::PairBags,
            Architecture::Linear,
            net_params,
        )
        .unwrap();
        let f = m.features(&toks("b a b"), Some(&toks("b x")));
        assert_eq!(f, vec![(0, 1.0), (1, 1.0), (3, 1.0), (4, 2.0 / 3.0)]);
    }

    #[test]
    fn coefficient_model_logits() {
        let labels = LabelSpace::numeric(2).unwrap();
        let m = ClassifierModel::linear_from_coefficients(
            labels,
            &[("good".into(), vec![0.0, 2.0]), ("bad".into(), vec![0.0, -2.0])],
            vec![0.0, 0.0],
        )
        .unwrap();
        let p = m.predict_proba(&toks("good good"), None);
        assert!((p[1] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        let p = m.predict_proba(&toks("unknown"), None);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let vocab = Vocabulary::new(["a", "b"].map(String::from));
        let arch = Architecture::Hidden { width: 3 };
        let net = Network {
            inputs: 2,
            outputs: 2,
            arch,
        };
        let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(7));
        let m = ClassifierModel::new(LabelSpace::numeric(2).unwrap(), vocab, Representation::Bag, arch, params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(ClassifierModel::load(&path).unwrap(), m);
    }

    #[test]
    fn wrong_param_count_rejected() {
        let vocab = Vocabulary::new(["a"].map(String::from));
        assert!(ClassifierModel::new(
            LabelSpace::numeric(2).unwrap(),
            vocab,
            Representation::Bag,
            Architecture::Linear,
            vec![0.0; 3]
        )
        .is_err());
    }
}
