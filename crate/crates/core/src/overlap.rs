//! Sentence-pair overlap: Levenshtein distance and distance strata.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

/// Minimum number of single-element insertions, deletions and substitutions
/// turning `a` into `b`, all at unit cost.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // keep the shorter sequence on the row
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            let sub = diag + usize::from(x != y);
            row[j + 1] = sub.min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    #[default]
    Token,
    /// Unicode scalar values of the raw texts, whitespace removed.
    Char,
}

impl FromStr for DistanceUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(Self::Token),
            "char" => Ok(Self::Char),
            other => Err(Error::Config(format!("unknown distance unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub edit_distance: usize,
    /// `edit_distance / max(len_a, len_b)`, 0 when both are empty.
    pub normalized_distance: f64,
}

impl OverlapStats {
    pub fn between<T: PartialEq>(a: &[T], b: &[T]) -> Self {
        let edit_distance = levenshtein(a, b);
        let longest = a.len().max(b.len());
        let normalized_distance = if longest == 0 {
            0.0
        } else {
            edit_distance as f64 / longest as f64
        };
        Self {
            edit_distance,
            normalized_distance,
        }
    }

    pub fn of_example(example: &Example, unit: DistanceUnit) -> Result<Self> {
        let b = example
            .tokens_b
            .as_ref()
            .ok_or_else(|| Error::NotPair(example.id.clone()))?;
        Ok(match unit {
            DistanceUnit::Token => Self::between(&example.tokens_a, b),
            DistanceUnit::Char => {
                let chars = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>();
                let text_b = example.text_b.as_deref().unwrap_or_default();
                Self::between(&chars(&example.text_a), &chars(text_b))
            }
        })
    }
}

/// Overlap statistics for every example of a pair dataset.
pub fn dataset_overlap(dataset: &Dataset, unit: DistanceUnit) -> Result<Vec<OverlapStats>> {
    dataset
        .examples()
        .iter()
        .map(|ex| OverlapStats::of_example(ex, unit))
        .collect()
}

/// Examples with edit distance at most `max_distance`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub max_distance: usize,
    pub ids: Vec<String>,
}

/// Nested subsets `Dist <= 1`, ..., `Dist <= max_distance`.
pub fn stratify(dataset: &Dataset, max_distance: usize, unit: DistanceUnit) -> Result<Vec<Stratum>> {
    if !dataset.is_pair() {
        return Err(Error::NotPair(
            dataset
                .examples()
                .iter()
                .find(|e| !e.is_pair())
                .map(|e| e.id.clone())
                .unwrap_or_else(|| "<empty dataset>".into()),
        ));
    }
    let overlap = dataset_overlap(dataset, unit)?;
    Ok((1..=max_distance)
        .map(|k| Stratum {
            max_distance: k,
            ids: dataset
                .examples()
                .iter()
                .zip(&overlap)
                .filter(|(_, o)| o.edit_distance <= k)
                .map(|(e, _)| e.id.clone())
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSpace;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
        assert_eq!(levenshtein(&chars("flaw"), &chars("lawn")), 2);
        assert_eq!(levenshtein(&chars("abc"), &chars("abc")), 0);
        let empty: [&str; 0] = [];
        assert_eq!(levenshtein(&empty, &["a", "b", "c"]), 3);
        assert_eq!(levenshtein(&["a", "b"], &empty), 2);
    }

    #[test]
    fn normalized_in_unit_range() {
        let o = OverlapStats::between(&["a", "b"], &["c", "d", "e", "f"]);
        assert_eq!(o.edit_distance, 4);
        assert_eq!(o.normalized_distance, 1.0);
        let empty: [u8; 0] = [];
        assert_eq!(OverlapStats::between(&empty, &empty).normalized_distance, 0.0);
    }

    fn pair(id: &str, a: &str, b: &str) -> Example {
        let split = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        Example::from_tokens(id, split(a), Some(split(b)), "1")
    }

    #[test]
    fn char_unit_ignores_whitespace() {
        let e = pair("1", "kit ten", "sitting");
        assert_eq!(OverlapStats::of_example(&e, DistanceUnit::Char).unwrap().edit_distance, 3);
        assert_eq!(OverlapStats::of_example(&e, DistanceUnit::Token).unwrap().edit_distance, 2);
    }

    #[test]
    fn strata_mirror_five_columns() {
        let ds = Dataset::new(
            LabelSpace::numeric(2).unwrap(),
            vec![pair("0", "a b c", "a b c"), pair("1", "a b c", "a x c"), pair("2", "a b c", "x y z w")],
        )
        .unwrap();
        let s = stratify(&ds, 5, DistanceUnit::Token).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].ids, vec!["0", "1"]);
        assert_eq!(s[3].ids, vec!["0", "1", "2"]);
        for w in s.windows(2) {
            assert!(w[0].ids.iter().all(|id| w[1].ids.contains(id)));
        }
    }

    #[test]
    fn identical_pairs_fill_every_stratum() {
        let ds = Dataset::new(
            LabelSpace::numeric(2).unwrap(),
            vec![pair("0", "a b", "a b"), pair("1", "c", "c")],
        )
        .unwrap();
        for s in stratify(&ds, 5, DistanceUnit::Token).unwrap() {
            assert_eq!(s.ids.len(), 2);
        }
    }

    #[test]
    fn far_pairs_leave_strata_empty() {
        let a: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let b: Vec<String> = (0..10).map(|i| format!("b{i}")).collect();
        let ex = Example::from_tokens("0", a, Some(b), "0");
        let ds = Dataset::new(LabelSpace::numeric(2).unwrap(), vec![ex]).unwrap();
        for s in stratify(&ds, 5, DistanceUnit::Token).unwrap() {
            assert!(s.ids.is_empty());
        }
    }

    #[test]
    fn single_sentence_dataset_rejected() {
        let ex = Example::from_tokens("0", vec!["a".into()], None, "0");
        let ds = Dataset::new(LabelSpace::numeric(2).unwrap(), vec![ex]).unwrap();
        assert!(matches!(stratify(&ds, 5, DistanceUnit::Token), Err(Error::NotPair(_))));
    }

    proptest! {
        #[test]
        fn bounded_and_zero_iff_equal(a in prop::collection::vec(0u8..4, 0..10), b in prop::collection::vec(0u8..4, 0..10)) {
            let d = levenshtein(&a, &b);
            prop_assert!(d <= a.len().max(b.len()));
            prop_assert!(d >= a.len().abs_diff(b.len()));
            prop_assert_eq!(d == 0, a == b);
        }
    }
}
