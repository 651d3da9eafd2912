//! Prediction tendency `T_c = |pred = c| / |gold = c|` on biased and focus-biased subsets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::explain::{find_focus_biased, ContributionRanking};
use crate::overlap::{stratify, DistanceUnit};
use crate::stats::BiasTable;

pub type LabelMap = HashMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tendency {
    pub size: usize,
    pub s_true: usize,
    pub s_pred: usize,
    /// `None` when no subset member has gold label `c`.
    pub value: Option<f64>,
}

pub fn tendency<'a>(
    predictions: &LabelMap,
    golds: &LabelMap,
    subset: impl IntoIterator<Item = &'a str>,
    label: &str,
) -> Result<Tendency> {
    let (mut size, mut s_true, mut s_pred) = (0, 0, 0);
    for id in subset {
        let p = predictions
            .get(id)
            .ok_or_else(|| Error::Config(format!("no prediction for {id:?}")))?;
        let g = golds.get(id).ok_or_else(|| Error::Config(format!("no gold label for {id:?}")))?;
        size += 1;
        s_pred += usize::from(p == label);
        s_true += usize::from(g == label);
    }
    Ok(Tendency {
        size,
        s_true,
        s_pred,
        value: (s_true > 0).then(|| s_pred as f64 / s_true as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelComparison {
    pub label: String,
    pub normal: Tendency,
    pub focus: Tendency,
    /// `T_focus - T`, absent when either is undefined.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyReport {
    /// `Some(k)` for the `Dist <= k` stratum.
    pub stratum: Option<usize>,
    pub rows: Vec<LabelComparison>,
}

impl TendencyReport {
    pub fn row(&self, label: &str) -> Option<&LabelComparison> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn delta(&self, label: &str) -> Option<f64> {
        self.row(label).and_then(|r| r.delta)
    }
}

/// Id -> argmax labels of the biased words it contains, for every biased example.
pub fn biased_groups(dataset: &Dataset, table: &BiasTable) -> BTreeMap<String, BTreeSet<String>> {
    dataset
        .examples()
        .iter()
        .filter_map(|e| {
            let labels: BTreeSet<String> = table
                .biased_words_in(e)
                .into_iter()
                .filter_map(|w| table.get(w))
                .map(|entry| table.labels().name(entry.label).to_owned())
                .collect();
            (!labels.is_empty()).then(|| (e.id.clone(), labels))
        })
        .collect()
}

/// Per label `m`: tendency toward `m` on biased examples holding a biased word of
/// label `m`, and on the focus-biased part of them.
pub fn tendency_comparison(
    predictions: &LabelMap,
    golds: &LabelMap,
    biased: &BTreeMap<String, BTreeSet<String>>,
    focus: &BTreeSet<String>,
    labels: &LabelSpace,
) -> Result<TendencyReport> {
    if let Some(id) = focus.iter().find(|id| !biased.contains_key(*id)) {
        return Err(Error::Config(format!("focus example {id:?} is not biased")));
    }
    let rows = labels
        .iter()
        .map(|label| {
            let group: Vec<&str> = biased
                .iter()
                .filter(|(_, ls)| ls.contains(label))
                .map(|(id, _)| id.as_str())
                .collect();
            let normal = tendency(predictions, golds, group.iter().copied(), label)?;
            let focus = tendency(
                predictions,
                golds,
                group.iter().copied().filter(|id| focus.contains(*id)),
                label,
            )?;
            let delta = normal.value.zip(focus.value).map(|(t, tf)| tf - t);
            Ok(LabelComparison {
                label: label.to_owned(),
                normal,
                focus,
                delta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TendencyReport { stratum: None, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub strata: Vec<TendencyReport>,
    pub notices: Vec<String>,
}

impl StratifiedReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `(k, delta)` per stratum, skipping undefined values.
    pub fn deltas(&self, label: &str) -> Vec<(usize, f64)> {
        self.strata
            .iter()
            .filter_map(|s| Some((s.stratum?, s.delta(label)?)))
            .collect()
    }
}

/// Comparison within each nested `Dist <= k` subset of a pair dataset.
pub fn stratified_tendency(
    predictions: &LabelMap,
    golds: &LabelMap,
    dataset: &Dataset,
    table: &BiasTable,
    rankings: &[ContributionRanking],
    max_distance: usize,
    unit: DistanceUnit,
) -> Result<StratifiedReport> {
    let groups = biased_groups(dataset, table);
    let focus = find_focus_biased(dataset, rankings, table);
    let mut report = StratifiedReport {
        strata: Vec::new(),
        notices: Vec::new(),
    };
    for stratum in stratify(dataset, max_distance, unit)? {
        let members: BTreeSet<&str> = stratum.ids.iter().map(String::as_str).collect();
        let sub_groups: BTreeMap<String, BTreeSet<String>> = groups
            .iter()
            .filter(|(id, _)| members.contains(id.as_str()))
            .map(|(id, l)| (id.clone(), l.clone()))
            .collect();
        if sub_groups.is_empty() {
            report
                .notices
                .push(format!("Dist <= {}: no biased examples, skipped", stratum.max_distance));
            continue;
        }
        let sub_focus: BTreeSet<String> = focus.iter().filter(|id| sub_groups.contains_key(*id)).cloned().collect();
        let mut r = tendency_comparison(predictions, golds, &sub_groups, &sub_focus, dataset.labels())?;
        r.stratum = Some(stratum.max_distance);
        report.strata.push(r);
    }
    Ok(report)
}

/// Mean delta per stratum across several models' reports.
pub fn mean_delta(reports: &[StratifiedReport], label: &str) -> Vec<(usize, f64)> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in reports {
        for (k, d) in r.deltas(label) {
            let e = sums.entry(k).or_default();
            e.0 += d;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
