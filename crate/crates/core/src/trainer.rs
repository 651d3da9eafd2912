//! Weighted-loss training, curriculum orders, forgetting tracking and the
//! reweighting / secondary-training baselines.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, Architecture, Classifier, ClassifierModel, Features, Representation, Vocabulary};
use crate::stats::{BiasPartition, BiasTable};
use crate::weights::{WeightMeta, WeightTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    #[default]
    Random,
    BiasFirst,
    BiasLast,
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "bias-first" | "bias_first" => Ok(Self::BiasFirst),
            "bias-last" | "bias_last" => Ok(Self::BiasLast),
            other => Err(Error::Config(format!("unknown order {other:?}"))),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::BiasFirst => "bias-first",
            Self::BiasLast => "bias-last",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub order: Order,
    /// Required for curriculum orders.
    pub partition: Option<BiasPartition>,
    pub weights: Option<WeightTable>,
    pub loss_log_every: usize,
    pub architecture: Architecture,
    /// Defaults to pair bags for sentence-pair datasets and a single bag otherwise.
    pub representation: Option<Representation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
            order: Order::Random,
            partition: None,
            weights: None,
            loss_log_every: 1,
            architecture: Architecture::Linear,
            representation: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.loss_log_every == 0 {
            return Err(Error::Config("loss_log_every must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.order != Order::Random && self.partition.is_none() {
            return Err(Error::Config(format!("order {} requires a bias partition", self.order)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

pub type LossCurve = Vec<LossPoint>;

/// `step,loss` lines.
pub fn write_loss_log(curve: &[LossPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in curve {
        writeln!(w, "{},{:.8}", p.step, p.loss).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-example correctness at the end of every epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgettingLog {
    pub ids: Vec<String>,
    /// `checkpoints[e][i]`: example `i` classified correctly after epoch `e`.
    pub checkpoints: Vec<Vec<bool>>,
}

impl ForgettingLog {
    pub fn new(ids: Vec<String>) -> Self {
        Self {
            ids,
            checkpoints: Vec::new(),
        }
    }

    pub fn record(&mut self, correct: Vec<bool>) {
        debug_assert_eq!(correct.len(), self.ids.len());
        self.checkpoints.push(correct);
    }

    /// Correct-to-incorrect transitions per example.
    pub fn events(&self) -> Vec<usize> {
        let mut events = vec![0; self.ids.len()];
        for pair in self.checkpoints.windows(2) {
            for (i, e) in events.iter_mut().enumerate() {
                if pair[0][i] && !pair[1][i] {
                    *e += 1;
                }
            }
        }
        events
    }

    pub fn never_learned(&self, i: usize) -> bool {
        self.checkpoints.iter().all(|c| !c[i])
    }

    /// Positions of examples with at least one forgetting event or never learned.
    pub fn forgotten(&self) -> Vec<usize> {
        let events = self.events();
        (0..self.ids.len())
            .filter(|&i| events[i] > 0 || self.never_learned(i))
            .collect()
    }

    pub fn forgotten_ids(&self) -> Vec<&str> {
        self.forgotten().into_iter().map(|i| self.ids[i].as_str()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ClassifierModel,
    pub loss_curve: LossCurve,
    pub forgetting: ForgettingLog,
}

/// Visiting order of training positions, reused for every epoch.
pub fn order_examples(
    dataset_len: usize,
    partition: Option<&BiasPartition>,
    order: Order,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6465_72ff);
    match order {
        Order::Random => {
            let mut all: Vec<usize> = (0..dataset_len).collect();
            all.shuffle(&mut rng);
            Ok(all)
        }
        Order::BiasFirst | Order::BiasLast => {
            let p = partition.ok_or_else(|| Error::Config(format!("order {order} requires a bias partition")))?;
            if p.words.len() != dataset_len {
                return Err(Error::Config("partition does not match the dataset".into()));
            }
            let mut biased = p.biased.clone();
            let mut unbiased = p.unbiased.clone();
            biased.shuffle(&mut rng);
            unbiased.shuffle(&mut rng);
            Ok(if order == Order::BiasFirst {
                biased.into_iter().chain(unbiased).collect()
            } else {
                unbiased.into_iter().chain(biased).collect()
            })
        }
    }
}

fn resolve_weights(dataset: &Dataset, weights: Option<&WeightTable>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; dataset.len()]),
        Some(table) => dataset
            .examples()
            .iter()
            .map(|e| table.get(&e.id).ok_or_else(|| Error::MissingWeight(e.id.clone())))
            .collect(),
    }
}

/// Trains a fresh model on `dataset`, minimizing `sum_i w_i * CE_i / batch_len`
/// with plain SGD.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let representation = config.representation.unwrap_or(if dataset.is_pair() {
        Representation::PairBags
    } else {
        Representation::Bag
    });
    let vocab = Vocabulary::from_dataset(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let network = crate::model::Network {
        inputs: ClassifierModel::input_dim(&vocab, representation),
        outputs: dataset.labels().len(),
        arch: config.architecture,
    };
    let params = network.init_params(&mut rng);
    let mut model = ClassifierModel::new(
        dataset.labels().clone(),
        vocab,
        representation,
        config.architecture,
        params,
    )?;
    let (loss_curve, forgetting) = continue_training(&mut model, dataset, config)?;
    Ok(TrainOutput {
        model,
        loss_curve,
        forgetting,
    })
}

/// Runs `config.epochs` more epochs of SGD on an existing model.
pub fn continue_training(
    model: &mut ClassifierModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(LossCurve, ForgettingLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.labels() != dataset.labels() {
        return Err(Error::Config("model and dataset label spaces differ".into()));
    }
    let weights = resolve_weights(dataset, config.weights.as_ref())?;
    let features: Vec<Features> = dataset
        .examples()
        .par_iter()
        .map(|e| model.example_features(e))
        .collect();
    let order = order_examples(dataset.len(), config.partition.as_ref(), config.order, config.seed)?;
    let network = model.network();
    let mut grad = vec![0.0; network.param_count()];
    let mut curve = Vec::new();
    let mut log = ForgettingLog::new(dataset.examples().iter().map(|e| e.id.clone()).collect());
    let mut step = 0;

    for epoch in 1..=config.epochs {
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch: Vec<(&Features, usize, f64)> = chunk
                .iter()
                .map(|&i| (&features[i], dataset.label_id(i), weights[i]))
                .collect();
            let loss = network.loss_and_grad(model.params(), &batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!(
                        "batch of {} starting at example {:?}, learning rate {}",
                        chunk.len(),
                        dataset.examples()[chunk[0]].id,
                        config.learning_rate
                    ),
                });
            }
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("parameters diverged at learning rate {}", config.learning_rate),
                });
            }
            if step % config.loss_log_every == 0 {
                curve.push(LossPoint { step, epoch, loss });
            }
        }
        let correct: Vec<bool> = features
            .par_iter()
            .enumerate()
            .map(|(i, x)| argmax(&model.predict_features(x)) == dataset.label_id(i))
            .collect();
        log.record(correct);
    }
    Ok((curve, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    pub gold: String,
    /// Probability of the predicted label.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<Prediction>,
}

impl Evaluation {
    pub fn write_predictions(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for p in &self.predictions {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
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

pub fn evaluate(model: &dyn Classifier, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.labels() != dataset.labels() {
        return Err(Error::Config("model and dataset label spaces differ".into()));
    }
    let predictions: Vec<Prediction> = dataset
        .examples()
        .par_iter()
        .map(|e| {
            let p = model.predict_example(e);
            let k = argmax(&p);
            Prediction {
                id: e.id.clone(),
                label: dataset.labels().name(k).to_owned(),
                gold: e.label.clone(),
                prob: p[k],
            }
        })
        .collect();
    let correct = predictions.iter().filter(|p| p.label == p.gold).count();
    Ok(Evaluation {
        accuracy: correct as f64 / dataset.len() as f64,
        correct,
        total: dataset.len(),
        predictions,
    })
}

pub const REW_BIAS_FLOOR: f64 = 0.05;

/// `1 - p(gold)` clipped to `[0.05, 1]`.
pub fn rew_bias_weight(p_gold: f64) -> f64 {
    (1.0 - p_gold).clamp(REW_BIAS_FLOOR, 1.0)
}

/// Weights from a bias-only model that sees nothing but biased-word indicators.
pub fn rew_bias_weights(dataset: &Dataset, table: &BiasTable, config: &TrainConfig) -> Result<WeightTable> {
    let mut meta = WeightMeta::named("rew-bias");
    if table.is_empty() {
        meta.warning = Some("no biased words; bias-only model is degenerate, all weights are 1".into());
        let entries = dataset.examples().iter().map(|e| (e.id.clone(), 1.0)).collect();
        return WeightTable::from_entries(meta, entries);
    }
    let vocab = Vocabulary::new(table.iter().map(|(w, _)| w.to_owned()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let network = crate::model::Network {
        inputs: vocab.len(),
        outputs: dataset.labels().len(),
        arch: Architecture::Linear,
    };
    let params = network.init_params(&mut rng);
    let mut bias_only = ClassifierModel::new(
        dataset.labels().clone(),
        vocab,
        Representation::Bag,
        Architecture::Linear,
        params,
    )?;
    let bias_config = TrainConfig {
        order: Order::Random,
        partition: None,
        weights: None,
        architecture: Architecture::Linear,
        representation: Some(Representation::Bag),
        ..config.clone()
    };
    continue_training(&mut bias_only, dataset, &bias_config)?;

    let mut biased = 0;
    let entries = dataset
        .examples()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let x = bias_only.example_features(e);
            if x.is_empty() {
                (e.id.clone(), 1.0)
            } else {
                biased += 1;
                let p = bias_only.predict_features(&x);
                (e.id.clone(), rew_bias_weight(p[dataset.label_id(i)]))
            }
        })
        .collect();
    meta.biased_examples = biased;
    WeightTable::from_entries(meta, entries)
}

#[derive(Debug, Clone)]
pub struct ForgettingOutcome {
    pub model: ClassifierModel,
    pub phase1: TrainOutput,
    pub forgotten: Vec<String>,
    /// Set when the forgotten set was empty and phase 2 was skipped.
    pub notice: Option<String>,
}

/// Trains normally, then continues on the forgotten examples only for `extra_epochs`.
pub fn forgetting_strategy(dataset: &Dataset, config: &TrainConfig, extra_epochs: usize) -> Result<ForgettingOutcome> {
    let phase1 = train(dataset, config)?;
    let positions = phase1.forgetting.forgotten();
    let forgotten: Vec<String> = positions.iter().map(|&i| dataset.examples()[i].id.clone()).collect();
    if positions.is_empty() || extra_epochs == 0 {
        return Ok(ForgettingOutcome {
            model: phase1.model.clone(),
            phase1,
            forgotten,
            notice: positions.is_empty().then(|| "no forgotten examples; returning the phase-1 model".into()),
        });
    }
    let subset = dataset.subset(&positions);
    let phase2_config = TrainConfig {
        epochs: extra_epochs,
        order: Order::Random,
        partition: None,
        weights: None,
        ..config.clone()
    };
    let mut model = phase1.model.clone();
    continue_training(&mut model, &subset, &phase2_config)?;
    Ok(ForgettingOutcome {
        model,
        phase1,
        forgotten,
        notice: None,
    })
}
