use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lls_core::corpus::{Dataset, LabelSpace, TokenizerSpec};
use lls_core::explain::{self, ExplainerConfig};
use lls_core::model::{Architecture, ClassifierModel};
use lls_core::overlap::DistanceUnit;
use lls_core::stats::{self, BiasTable};
use lls_core::synth::{self, SynthConfig};
use lls_core::tendency::{self, LabelMap, StratifiedReport, TendencyReport};
use lls_core::trainer::{self, Order, TrainConfig};
use lls_core::weights::{self, LlsConfig, Variant, WeightTable};

use crate::run::Run;
use crate::{
    AnalyzeArgs, CorpusArgs, EvalArgs, ExplainArgs, Globals, SynthArgs, TendencyArgs, TokenizerArg, TrainArgs,
    VariantArg, WeightsArgs,
};

/// Contents of `eval_<strategy>_<split>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub strategy: String,
    pub split: String,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Contents of the tendency output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyOutput {
    pub overall: TendencyReport,
    /// Empty for single-text datasets.
    pub strata: StratifiedReport,
}

fn config_of(args: &impl Serialize, seed: u64) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(args)?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("seed".into(), json!(seed));
    }
    Ok(v)
}

fn tokenizer(mode: TokenizerArg, lowercase: bool) -> TokenizerSpec {
    TokenizerSpec::new(mode.into()).with_lowercase(lowercase)
}

fn load_dataset(run: &mut Run, path: &Path, tok: &TokenizerSpec, labels: Option<&str>) -> Result<Dataset> {
    run.input(path)?;
    let ds = match labels {
        Some(l) => {
            let space: LabelSpace = l.parse()?;
            Dataset::load(path, tok, &space)?
        }
        None => Dataset::load_infer_labels(path, tok)?,
    };
    run.note(format!("loaded {} examples from {}", ds.len(), path.display()));
    Ok(ds)
}

fn load_corpus(run: &mut Run, c: &CorpusArgs) -> Result<Dataset> {
    load_dataset(run, &c.input, &tokenizer(c.tokenizer, c.lowercase), c.labels.as_deref())
}

fn load_table(run: &mut Run, path: &Path, labels: &LabelSpace, min_freq: usize, min_degree: f64) -> Result<BiasTable> {
    run.input(path)?;
    Ok(BiasTable::read_jsonl(path, labels, min_freq, min_degree)?)
}

fn load_model(run: &mut Run, path: &Path) -> Result<ClassifierModel> {
    run.input(path)?;
    Ok(ClassifierModel::load(path)?)
}

pub fn analyze(g: &Globals, a: AnalyzeArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "analyze", seed, g.quiet)?;
    let ds = load_corpus(&mut run, &a.corpus)?;
    let word_stats = stats::compute_word_stats(&ds);
    let table = stats::detect_biased_words(&word_stats, ds.labels(), a.min_freq, a.min_degree)?;
    let report = stats::summarize(&ds, &table);
    let table_path = run.output(&a.out_table);
    table.write_jsonl(&table_path)?;
    let report_path = run.output(&a.out_report);
    report.write_json(&report_path)?;
    run.note(format!(
        "{} biased words, {} biased examples ({:.2}%)",
        report.biased_words, report.biased_examples, report.biased_example_pct
    ));
    let config = config_of(&a, seed)?;
    run.finish(config)
}

pub fn weights(g: &Globals, a: WeightsArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "weights", seed, g.quiet)?;
    let ds = load_corpus(&mut run, &a.corpus)?;
    let table = load_table(&mut run, &a.table, ds.labels(), a.min_freq, a.min_degree)?;
    let wt = if a.variant == VariantArg::RewBias {
        let cfg = TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch,
            seed,
            ..TrainConfig::default()
        };
        trainer::rew_bias_weights(&ds, &table, &cfg)?
    } else {
        let variant = match a.variant {
            VariantArg::D => Variant::D,
            VariantArg::Df => Variant::Df,
            _ => Variant::Full,
        };
        let cfg = LlsConfig {
            variant,
            alpha: a.alpha,
            beta: a.beta,
            tau: a.tau,
            freq_normalization: a.freq_norm.into(),
            conflict_policy: a.conflict_policy.into(),
            distance_unit: a.distance_unit.into(),
            positive_label: a.positive_label.clone(),
        };
        cfg.validate()?;
        weights::compute_weights(&ds, &table, &cfg)?
    };
    if let Some(w) = &wt.meta.warning {
        run.note(format!("warning: {w}"));
    }
    let out = run.output(&a.out);
    wt.write_tsv(&out)?;
    run.note(format!("{} weights, {} biased examples", wt.len(), wt.meta.biased_examples));
    let config = config_of(&a, seed)?;
    run.finish(config)
}

pub fn synth(g: &Globals, a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::load(&a.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let mut run = Run::start(&g.out_dir, "synth", cfg.seed, g.quiet)?;
    run.input(&a.config)?;
    let corpus = synth::generate(&cfg)?;
    corpus.write_to_dir(run.dir())?;
    for name in ["train.jsonl", "test.jsonl", "adversarial.jsonl", "synth_manifest.json"] {
        run.output(Path::new(name));
    }
    run.note(format!(
        "train {} / test {} / adversarial {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.adversarial.len()
    ));
    let config = serde_json::to_value(&cfg)?;
    run.finish(config)
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "train", seed, g.quiet)?;
    let ds = load_corpus(&mut run, &a.corpus)?;
    let order: Order = a.order.into();
    let partition = match &a.table {
        Some(p) => {
            let table = load_table(&mut run, p, ds.labels(), a.min_freq, a.min_degree)?;
            Some(stats::mark_biased_examples(&ds, &table))
        }
        None if order != Order::Random => bail!("--order {order} requires --table"),
        None => None,
    };
    let weights = match &a.weights {
        Some(p) => {
            run.input(p)?;
            Some(WeightTable::read_tsv(p)?)
        }
        None => None,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch,
        seed,
        order,
        partition,
        weights,
        loss_log_every: a.loss_log_every,
        architecture: match a.hidden {
            Some(width) => Architecture::Hidden { width },
            None => Architecture::Linear,
        },
        representation: None,
    };
    let (model, curve) = match a.forgetting_epochs {
        Some(extra) => {
            let out = trainer::forgetting_strategy(&ds, &cfg, extra)?;
            if let Some(n) = &out.notice {
                run.note(n);
            }
            run.note(format!("{} forgotten examples", out.forgotten.len()));
            (out.model, out.phase1.loss_curve)
        }
        None => {
            let out = trainer::train(&ds, &cfg)?;
            (out.model, out.loss_curve)
        }
    };
    let model_path = run.output(&a.model_out);
    model.save(&model_path)?;
    let log_path = run.output(&a.loss_log);
    trainer::write_loss_log(&curve, &log_path)?;
    if let Some(last) = curve.last() {
        run.note(format!("final logged loss {:.4}", last.loss));
    }
    let config = config_of(&a, seed)?;
    run.finish(config)
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "eval", seed, g.quiet)?;
    let model = load_model(&mut run, &a.model)?;
    let c = &a.corpus;
    let labels = c.labels.clone().unwrap_or_else(|| model.labels().as_slice().join(","));
    let ds = load_dataset(&mut run, &c.input, &tokenizer(c.tokenizer, c.lowercase), Some(&labels))?;
    let ev = trainer::evaluate(&model, &ds)?;
    let split = match &a.split {
        Some(s) => s.clone(),
        None => c
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into()),
    };
    let pred_path = run.output(&a.out);
    ev.write_predictions(&pred_path)?;
    let summary = EvalSummary {
        strategy: a.strategy.clone(),
        split: split.clone(),
        accuracy: ev.accuracy,
        correct: ev.correct,
        total: ev.total,
    };
    let default_name = format!("eval_{}_{}.json", a.strategy, split);
    let summary_path = run.output(a.summary.as_deref().unwrap_or(Path::new(&default_name)));
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    run.note(format!("{} on {}: accuracy {:.4}", a.strategy, split, ev.accuracy));
    let config = config_of(&a, seed)?;
    run.finish(config)
}

pub fn explain(g: &Globals, a: ExplainArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "explain", seed, g.quiet)?;
    let model = load_model(&mut run, &a.model)?;
    let c = &a.corpus;
    let labels = c.labels.clone().unwrap_or_else(|| model.labels().as_slice().join(","));
    let ds = load_dataset(&mut run, &c.input, &tokenizer(c.tokenizer, c.lowercase), Some(&labels))?;
    let table = match &a.table {
        Some(p) => Some(load_table(&mut run, p, ds.labels(), a.min_freq, a.min_degree)?),
        None => None,
    };
    if a.top_k.is_some() && table.is_none() {
        bail!("--top-k requires --table");
    }
    let positions: Vec<usize> = match &table {
        Some(t) => stats::mark_biased_examples(&ds, t).biased,
        None => (0..ds.len()).collect(),
    };
    let cfg = ExplainerConfig {
        n_samples: a.n_samples,
        kernel_width: a.kernel_width,
        seed,
        method: a.method.into(),
    };
    let rankings = explain::explain_positions(&model, &ds, &positions, &cfg)?;
    let out = run.output(&a.out);
    explain::write_rankings(&rankings, &out)?;
    run.note(format!("{} rankings", rankings.len()));
    if let (Some(k), Some(t)) = (a.top_k, &table) {
        let stopwords: BTreeSet<String> = match &a.stopwords {
            Some(p) => {
                run.input(p)?;
                fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_owned)
                    .collect()
            }
            None => BTreeSet::new(),
        };
        let ratios = explain::top_k_bias_ratio(&rankings, t, k, seed, &stopwords);
        let path = run.output(&a.out_topk);
        fs::write(&path, serde_json::to_string_pretty(&ratios)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let config = config_of(&a, seed)?;
    run.finish(config)
}

pub fn tendency(g: &Globals, a: TendencyArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut run = Run::start(&g.out_dir, "tendency", seed, g.quiet)?;
    let ds = load_dataset(&mut run, &a.gold, &tokenizer(a.tokenizer, a.lowercase), a.labels.as_deref())?;
    let table = load_table(&mut run, &a.table, ds.labels(), a.min_freq, a.min_degree)?;
    run.input(&a.pred)?;
    let preds: LabelMap = trainer::read_predictions(&a.pred)?
        .into_iter()
        .map(|p| (p.id, p.label))
        .collect();
    let golds: LabelMap = ds.examples().iter().map(|e| (e.id.clone(), e.label.clone())).collect::<HashMap<_, _>>();
    run.input(&a.rankings)?;
    let rankings = explain::read_rankings(&a.rankings)?;

    let groups = tendency::biased_groups(&ds, &table);
    let focus = explain::find_focus_biased(&ds, &rankings, &table);
    let overall = tendency::tendency_comparison(&preds, &golds, &groups, &focus, ds.labels())?;
    let strata = if ds.is_pair() {
        let unit: DistanceUnit = a.distance_unit.into();
        tendency::stratified_tendency(&preds, &golds, &ds, &table, &rankings, a.max_dist, unit)?
    } else {
        StratifiedReport {
            strata: Vec::new(),
            notices: vec!["single-text dataset; no distance strata".into()],
        }
    };
    for n in &strata.notices {
        run.note(n);
    }
    for row in &overall.rows {
        if let Some(d) = row.delta {
            run.note(format!("label {}: delta {d:+.4}", row.label));
        }
    }
    let out = run.output(&a.out);
    let doc = TendencyOutput { overall, strata };
    fs::write(&out, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", out.display()))?;
    let config = config_of(&a, seed)?;
    run.finish(config)
}
