//! Consolidated run summary plus plot-ready CSV value files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use lls_core::stats::StatsReport;
use lls_core::weights::WeightTable;

use crate::commands::{EvalSummary, TendencyOutput};
use crate::run::Run;
use crate::{Globals, ReportArgs};

pub const SUMMARY: &str = "summary.json";
pub const WEIGHT_CSV: &str = "weight_histogram.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const TENDENCY_CSV: &str = "tendency.csv";

/// Strategy rows of the accuracy table, in display order.
pub const STRATEGIES: [&str; 6] = ["finetune", "rew-bias", "forg", "lls-d", "lls-df", "lls"];

const HIST_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Section<T> {
    Present(T),
    Absent(String),
}

impl<T> Section<T> {
    pub fn present(&self) -> Option<&T> {
        match self {
            Section::Present(v) => Some(v),
            Section::Absent(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDistribution {
    pub file: String,
    pub variant: String,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub bins: Vec<HistBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub strategy: String,
    pub split: String,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: Section<StatsReport>,
    pub weights: Section<Vec<WeightDistribution>>,
    pub accuracy: Vec<AccuracyRow>,
    pub tendency: Section<TendencyOutput>,
    pub gaps: Vec<String>,
}

fn histogram(values: &[f64]) -> Vec<HistBin> {
    let mut bins: Vec<HistBin> = (0..HIST_BINS)
        .map(|i| HistBin {
            lo: i as f64 / HIST_BINS as f64,
            hi: (i + 1) as f64 / HIST_BINS as f64,
            count: 0,
        })
        .collect();
    for &v in values {
        let i = ((v * HIST_BINS as f64).floor().max(0.0) as usize).min(HIST_BINS - 1);
        bins[i].count += 1;
    }
    bins
}

fn sorted_files(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(&keep))
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn build_summary(dir: &Path, mut on_input: impl FnMut(&Path) -> Result<()>) -> Result<Summary> {
    let mut gaps = Vec::new();

    let stats_path = dir.join("stats_report.json");
    let dataset = if stats_path.exists() {
        on_input(&stats_path)?;
        Section::Present(StatsReport::read_json(&stats_path)?)
    } else {
        gaps.push("dataset statistics: stats_report.json not found".into());
        Section::Absent("stats_report.json not found".into())
    };

    let mut dists = Vec::new();
    for path in sorted_files(dir, |n| n.ends_with(".tsv"))? {
        on_input(&path)?;
        let table = WeightTable::read_tsv(&path)?;
        let values: Vec<f64> = table.entries().iter().map(|(_, w)| *w).collect();
        if values.is_empty() {
            continue;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        dists.push(WeightDistribution {
            file: file_name(&path),
            variant: table.meta.variant.clone(),
            count: values.len(),
            min,
            max,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            bins: histogram(&values),
        });
    }
    let weights = if dists.is_empty() {
        gaps.push("weight distribution: no weight tables found".into());
        Section::Absent("no weight tables found".into())
    } else {
        Section::Present(dists)
    };

    let mut evals = Vec::new();
    for path in sorted_files(dir, |n| n.starts_with("eval_") && n.ends_with(".json"))? {
        on_input(&path)?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let e: EvalSummary = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        evals.push(e);
    }
    let splits: BTreeSet<&str> = evals.iter().map(|e| e.split.as_str()).collect();
    let mut strategies: Vec<&str> = STRATEGIES.to_vec();
    for e in &evals {
        if !strategies.contains(&e.strategy.as_str()) {
            strategies.push(&e.strategy);
        }
    }
    let mut accuracy = Vec::new();
    for s in &strategies {
        if splits.is_empty() {
            accuracy.push(AccuracyRow {
                strategy: (*s).to_owned(),
                split: String::new(),
                accuracy: None,
            });
        }
        for split in &splits {
            let found = evals.iter().find(|e| e.strategy == *s && e.split == *split);
            if found.is_none() {
                gaps.push(format!("accuracy: {s} on {split} not found"));
            }
            accuracy.push(AccuracyRow {
                strategy: (*s).to_owned(),
                split: (*split).to_owned(),
                accuracy: found.map(|e| e.accuracy),
            });
        }
    }
    if splits.is_empty() {
        gaps.push("accuracy: no evaluation summaries found".into());
    }

    let tendency_path = dir.join("tendency.json");
    let tendency = if tendency_path.exists() {
        on_input(&tendency_path)?;
        let text = fs::read_to_string(&tendency_path)?;
        Section::Present(serde_json::from_str(&text).context("parsing tendency.json")?)
    } else {
        gaps.push("tendency: tendency.json not found (explainer and tendency stages not run)".into());
        Section::Absent("tendency.json not found".into())
    };

    Ok(Summary {
        dataset,
        weights,
        accuracy,
        tendency,
        gaps,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn weight_csv(s: &Summary) -> String {
    let mut out = String::from("file,variant,lo,hi,count\n");
    for d in s.weights.present().into_iter().flatten() {
        for b in &d.bins {
            let _ = writeln!(out, "{},{},{},{},{}", d.file, d.variant, b.lo, b.hi, b.count);
        }
    }
    out
}

pub fn accuracy_csv(s: &Summary) -> String {
    let mut out = String::from("strategy,split,accuracy\n");
    for r in &s.accuracy {
        let _ = writeln!(out, "{},{},{}", r.strategy, r.split, opt(r.accuracy));
    }
    out
}

pub fn tendency_csv(s: &Summary) -> String {
    let mut out = String::from("stratum,label,size,t,focus_size,t_focus,delta\n");
    if let Some(t) = s.tendency.present() {
        let reports = std::iter::once(&t.overall).chain(&t.strata.strata);
        for r in reports {
            let stratum = r.stratum.map_or_else(|| "all".to_owned(), |k| k.to_string());
            for row in &r.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    stratum,
                    row.label,
                    row.normal.size,
                    opt(row.normal.value),
                    row.focus.size,
                    opt(row.focus.value),
                    opt(row.delta)
                );
            }
        }
    }
    out
}

pub fn report(g: &Globals, a: ReportArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let dir = a.run_dir.clone().unwrap_or_else(|| g.out_dir.clone());
    let mut run = Run::start(&g.out_dir, "report", seed, g.quiet)?;
    let summary = build_summary(&dir, |p| run.input(p))?;
    for gap in &summary.gaps {
        run.note(format!("gap: {gap}"));
    }
    let files = [
        (SUMMARY, serde_json::to_string_pretty(&summary)? + "\n"),
        (WEIGHT_CSV, weight_csv(&summary)),
        (ACCURACY_CSV, accuracy_csv(&summary)),
        (TENDENCY_CSV, tendency_csv(&summary)),
    ];
    for (name, text) in files {
        let path = run.output(Path::new(name));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let config = serde_json::json!({ "run_dir": dir, "seed": seed });
    run.finish(config)
}
