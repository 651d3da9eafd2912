//! Acceptance suite A1-A9. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use lls_core::corpus::{Dataset, Example, LabelSpace};
use lls_core::explain::{explain_positions, find_focus_biased, lime_explain, occlusion_explain, ExplainerConfig};
use lls_core::model::{Architecture, ClassifierModel, Features, Network};
use lls_core::overlap::{levenshtein, DistanceUnit};
use lls_core::stats::{
    biased_degree, compute_word_stats, detect_biased_words, mark_biased_examples, WordStats,
};
use lls_core::synth::{generate, AutoPlants, PlantSpec, SynthConfig, SynthCorpus};
use lls_core::tendency::{biased_groups, stratified_tendency, tendency, tendency_comparison, LabelMap};
use lls_core::trainer::{evaluate, train, Order, TrainConfig};
use lls_core::weights::{compute_weights, example_impact, LlsConfig, Variant};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = Ratio<i64>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn q(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

// A1

fn a1() -> Verdict {
    let labels = LabelSpace::numeric(2).unwrap();
    let handy = WordStats {
        word: "handy".into(),
        example_freq: 35,
        per_label: vec![2, 33],
    };
    let float = WordStats {
        word: "float".into(),
        example_freq: 5,
        per_label: vec![5, 0],
    };
    let d1 = biased_degree(&handy, &labels, "1").unwrap();
    let exact = Q::new(33, 35);
    let err = (d1 - q(exact)).abs();
    let rounded = (d1 * 100.0).round() / 100.0;
    let d0 = biased_degree(&float, &labels, "0").unwrap();
    let pass = err <= 1e-9 && rounded == 0.94 && d0 == 1.0 && format!("{d0:.2}") == "1.00";
    verdict(pass, format!("handy d_1={d1:.6} (|err| {err:.1e}, 2dp {rounded}), float d_0={d0:.2}"))
}

// A2: exhaustive-enumeration oracle over rationals

struct Micro {
    dataset: Dataset,
    vocab: Vec<String>,
}

fn micro_corpus(rng: &mut ChaCha8Rng, pair: bool) -> Micro {
    let k: usize = rng.gen_range(2..=3);
    let labels = LabelSpace::numeric(k).unwrap();
    let v: usize = rng.gen_range(3..=20);
    let vocab: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let n = rng.gen_range(1..=50);
    let mut examples = Vec::new();
    for i in 0..n {
        let label = rng.gen_range(0..k);
        let len = rng.gen_range(1..=6);
        let draw = |rng: &mut ChaCha8Rng| -> String {
            // label-leaning words make biased words common
            if rng.gen_bool(0.5) {
                let j = rng.gen_range(0..v.div_ceil(k));
                vocab[(j * k + label).min(v - 1)].clone()
            } else {
                vocab[rng.gen_range(0..v)].clone()
            }
        };
        let a: Vec<String> = (0..len).map(|_| draw(rng)).collect();
        let b = pair.then(|| {
            let mut b = a.clone();
            for _ in 0..rng.gen_range(0..=4) {
                match rng.gen_range(0..3) {
                    0 if !b.is_empty() => {
                        let at = rng.gen_range(0..b.len());
                        b[at] = draw(rng);
                    }
                    1 if b.len() > 1 => {
                        b.remove(rng.gen_range(0..b.len()));
                    }
                    _ => b.insert(rng.gen_range(0..=b.len()), draw(rng)),
                }
            }
            b
        });
        examples.push(Example::from_tokens(format!("e{i}"), a, b, labels.name(label)));
    }
    Micro {
        dataset: Dataset::new(labels, examples).unwrap(),
        vocab,
    }
}

fn lev_memo(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

struct OracleWord {
    label: usize,
    degree: Q,
    freq: i64,
}

/// Biased words, biased example positions and per-variant weights, by enumeration.
fn oracle(m: &Micro, variant: Variant) -> (BTreeMap<String, OracleWord>, Vec<usize>, Vec<Q>) {
    let ds = &m.dataset;
    let k = ds.labels().len();
    let mut table = BTreeMap::new();
    for w in &m.vocab {
        let mut per = vec![0i64; k];
        let mut f = 0i64;
        for (i, e) in ds.examples().iter().enumerate() {
            let present = e.tokens_a.contains(w) || e.tokens_b.as_ref().is_some_and(|b| b.contains(w));
            if present {
                f += 1;
                per[ds.label_id(i)] += 1;
            }
        }
        if f < 3 {
            continue;
        }
        let mut best = 0;
        for c in 1..k {
            if per[c] > per[best] {
                best = c;
            }
        }
        let degree = Q::new(per[best], f);
        if degree >= Q::new(4, 5) {
            table.insert(
                w.clone(),
                OracleWord {
                    label: best,
                    degree,
                    freq: f,
                },
            );
        }
    }
    let max_f = table.values().map(|o| o.freq).max().unwrap_or(1);
    let alpha = Q::new(1, 10);
    let impact = |w: &str| -> Q {
        let o = &table[w];
        match variant {
            Variant::D => o.degree,
            _ => o.degree + alpha * Q::new(o.freq, max_f),
        }
    };
    let mut biased = Vec::new();
    let mut b_e: Vec<Option<Q>> = Vec::new();
    for (i, e) in ds.examples().iter().enumerate() {
        let words: Vec<&str> = table
            .keys()
            .filter(|w| e.tokens_a.contains(w) || e.tokens_b.as_ref().is_some_and(|b| b.contains(w)))
            .map(String::as_str)
            .collect();
        if words.is_empty() {
            b_e.push(None);
            continue;
        }
        biased.push(i);
        let impacts: Vec<Q> = words.iter().map(|w| impact(w)).collect();
        let mut conflict = false;
        if variant == Variant::Full {
            let mut top = 0;
            for j in 1..words.len() {
                if impacts[j] > impacts[top] {
                    top = j;
                }
            }
            let b = e.tokens_b.as_ref().unwrap();
            let longest = e.tokens_a.len().max(b.len()) as i64;
            let dist = Q::new(lev_memo(&e.tokens_a, b) as i64, longest.max(1));
            let implies_match = dist <= Q::new(3, 10);
            let word_label = table[words[top]].label;
            conflict = if implies_match { word_label != 1 } else { word_label == 1 };
        }
        b_e.push(Some(if conflict {
            *impacts.iter().min().unwrap()
        } else {
            impacts.iter().copied().sum::<Q>() / Q::from_integer(impacts.len() as i64)
        }));
    }
    let values: Vec<Q> = b_e.iter().flatten().copied().collect();
    let beta = Q::new(1, 2);
    let weights = b_e
        .iter()
        .map(|b| match b {
            None => Q::from_integer(1),
            Some(b) => {
                let lo = *values.iter().min().unwrap();
                let hi = *values.iter().max().unwrap();
                let norm = if hi == lo { Q::from_integer(1) } else { (b - lo) / (hi - lo) };
                Q::from_integer(1) - beta * norm
            }
        })
        .collect();
    (table, biased, weights)
}

fn a2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    let mut biased_words = 0;
    for c in 0..100 {
        let pair = c % 2 == 1;
        let m = micro_corpus(&mut rng, pair);
        let table = detect_biased_words(&compute_word_stats(&m.dataset), m.dataset.labels(), 3, 0.8).unwrap();
        let partition = mark_biased_examples(&m.dataset, &table);
        let variants: &[Variant] = if pair {
            &[Variant::D, Variant::Df, Variant::Full]
        } else {
            &[Variant::D, Variant::Df]
        };
        for &variant in variants {
            let (words, biased, weights) = oracle(&m, variant);
            biased_words += words.len();
            let got: BTreeSet<&str> = table.iter().map(|(w, _)| w).collect();
            let want: BTreeSet<&str> = words.keys().map(String::as_str).collect();
            if got != want {
                mismatches.push(format!("corpus {c}: biased words {got:?} vs {want:?}"));
                continue;
            }
            for (w, o) in &words {
                let e = table.get(w).unwrap();
                if e.label != o.label || e.freq as i64 != o.freq || (e.degree - q(o.degree)).abs() > 1e-12 {
                    mismatches.push(format!("corpus {c}: entry {w}"));
                }
            }
            if partition.biased != biased {
                mismatches.push(format!("corpus {c}: partition"));
            }
            let cfg = LlsConfig::new(variant);
            let table_w = compute_weights(&m.dataset, &table, &cfg).unwrap();
            for (i, (id, w)) in table_w.entries().iter().enumerate() {
                if (w - q(weights[i])).abs() > 1e-12 {
                    mismatches.push(format!("corpus {c} {variant}: weight {id} {w} vs {}", q(weights[i])));
                }
            }
        }
    }
    let detail = if mismatches.is_empty() {
        format!("100 corpora, {biased_words} oracle biased-word rows, all sets and weights agree")
    } else {
        format!("{} mismatches, first: {}", mismatches.len(), mismatches[0])
    };
    verdict(mismatches.is_empty(), detail)
}

// A3

fn varied_corpus(seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plants = (0..6)
        .map(|i| {
            let freq = rng.gen_range(10..60);
            PlantSpec {
                word: format!("p{i}"),
                label: i % 2,
                degree: [0.8, 0.85, 0.9, 0.95, 1.0][rng.gen_range(0..5)],
                freq,
            }
        })
        .collect();
    generate(&SynthConfig {
        seed,
        train_size: 600,
        test_size: 50,
        pair_task: true,
        plants,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn a3() -> Verdict {
    let mut problems = Vec::new();
    for seed in 0..10 {
        let c = varied_corpus(seed);
        let ds = &c.train;
        let table = detect_biased_words(&compute_word_stats(ds), ds.labels(), 3, 0.8).unwrap();
        let part = mark_biased_examples(ds, &table);
        for variant in [Variant::D, Variant::Df, Variant::Full] {
            for beta in [0.0, 0.3, 0.5, 1.0] {
                let cfg = LlsConfig::new(variant).with_beta(beta);
                let w = compute_weights(ds, &table, &cfg).unwrap();
                let impacts: Vec<f64> = part
                    .biased
                    .iter()
                    .map(|&i| example_impact(&ds.examples()[i], &table, &cfg, None).unwrap())
                    .collect();
                let lo = impacts.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = impacts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (id, x) in w.entries() {
                    if !(*x >= 1.0 - beta && *x <= 1.0) {
                        problems.push(format!("seed {seed}: {id} weight {x} outside range"));
                    }
                }
                for (j, &i) in part.biased.iter().enumerate() {
                    let x = w.get(&ds.examples()[i].id).unwrap();
                    if impacts[j] == hi && x != 1.0 - beta {
                        problems.push(format!("seed {seed}: max-impact weight {x}"));
                    }
                    if impacts[j] == lo && hi > lo && x != 1.0 {
                        problems.push(format!("seed {seed}: min-impact weight {x}"));
                    }
                }
            }
        }
        let d = compute_weights(ds, &table, &LlsConfig::new(Variant::D)).unwrap();
        let df0 = compute_weights(ds, &table, &LlsConfig::new(Variant::Df).with_alpha(0.0)).unwrap();
        if d.entries() != df0.entries() {
            problems.push(format!("seed {seed}: df with alpha 0 differs from d"));
        }
    }

    let c = varied_corpus(99);
    let table = detect_biased_words(&compute_word_stats(&c.train), c.train.labels(), 3, 0.8).unwrap();
    let zero = compute_weights(&c.train, &table, &LlsConfig::default().with_beta(0.0)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let plain = train(&c.train, &cfg).unwrap();
    let weighted = train(
        &c.train,
        &TrainConfig {
            weights: Some(zero),
            ..cfg.clone()
        },
    )
    .unwrap();
    if plain.model.params() != weighted.model.params() || plain.loss_curve != weighted.loss_curve {
        problems.push("beta 0 run differs from unweighted run".into());
    }
    let detail = if problems.is_empty() {
        "10 corpora x 3 variants x 4 betas: range, extremes exact; beta=0 bit-identical; df(alpha=0)=d".to_string()
    } else {
        format!("{} problems, first: {}", problems.len(), problems[0])
    };
    verdict(problems.is_empty(), detail)
}

// A4

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for t in i..=j {
                r[idx[t]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn a4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let labels = LabelSpace::numeric(2).unwrap();
    let vocab: Vec<String> = (0..40).map(|i| format!("v{i}")).collect();
    let coef: Vec<f64> = (0..vocab.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let rows: Vec<(String, Vec<f64>)> = vocab.iter().zip(&coef).map(|(w, &c)| (w.clone(), vec![0.0, c])).collect();
    let model = ClassifierModel::linear_from_coefficients(labels, &rows, vec![0.0, 0.0]).unwrap();
    let cfg = ExplainerConfig::default();
    let random_input = |rng: &mut ChaCha8Rng, i: usize| -> Example {
        let n = rng.gen_range(5..=10);
        let words: Vec<String> = vocab.choose_multiple(rng, n).cloned().collect();
        Example::from_tokens(format!("x{i}"), words, None, "0")
    };

    let mut agree = 0;
    for i in 0..20 {
        let e = random_input(&mut rng, i);
        let strongest = e
            .tokens_a
            .iter()
            .max_by(|a, b| {
                let ca = coef[vocab.iter().position(|v| v == *a).unwrap()].abs();
                let cb = coef[vocab.iter().position(|v| v == *b).unwrap()].abs();
                ca.total_cmp(&cb)
            })
            .unwrap();
        let r = lime_explain(&model, &e, &cfg).unwrap();
        agree += usize::from(r.top() == Some(strongest.as_str()));
    }

    let mut rho_sum = 0.0;
    for i in 0..50 {
        let e = random_input(&mut rng, 100 + i);
        let lime = lime_explain(&model, &e, &cfg).unwrap();
        let occ = occlusion_explain(&model, &e);
        let words: Vec<&str> = e.distinct_words();
        let a: Vec<f64> = words.iter().map(|w| lime.score(w).unwrap()).collect();
        let b: Vec<f64> = words.iter().map(|w| occ.score(w).unwrap()).collect();
        rho_sum += spearman(&a, &b);
    }
    let rho = rho_sum / 50.0;
    verdict(
        agree >= 18 && rho >= 0.8,
        format!("top-1 agreement {agree}/20 (need >= 18), mean Spearman {rho:.3} (need >= 0.8)"),
    )
}

// A5 / A6

fn a5_corpus(seed: u64) -> SynthCorpus {
    generate(&SynthConfig {
        seed,
        train_size: 10_000,
        test_size: 2_000,
        pair_task: true,
        auto_plants: Some(AutoPlants {
            count: 20,
            degree: 0.9,
            share: 0.4,
            labels: vec![],
        }),
        adversarial_flip_rate: 1.0,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn a5_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        learning_rate: 0.1,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    }
}

fn a5() -> Verdict {
    let (mut adv_gain, mut in_drop) = (0.0, 0.0);
    let mut share = 0.0;
    for seed in 0..5 {
        let c = a5_corpus(seed);
        let table = detect_biased_words(&compute_word_stats(&c.train), c.train.labels(), 3, 0.8).unwrap();
        share += mark_biased_examples(&c.train, &table).biased.len() as f64 / c.train.len() as f64;
        let weights = compute_weights(&c.train, &table, &LlsConfig::default().with_beta(0.5)).unwrap();
        let base = a5_train_config(seed);
        let finetune = train(&c.train, &base).unwrap().model;
        let lls = train(
            &c.train,
            &TrainConfig {
                weights: Some(weights),
                ..base
            },
        )
        .unwrap()
        .model;
        let acc = |m: &ClassifierModel, d: &Dataset| evaluate(m, d).unwrap().accuracy * 100.0;
        adv_gain += acc(&lls, &c.adversarial) - acc(&finetune, &c.adversarial);
        in_drop += acc(&finetune, &c.test) - acc(&lls, &c.test);
    }
    let (adv_gain, in_drop, share) = (adv_gain / 5.0, in_drop / 5.0, share / 5.0);
    verdict(
        adv_gain >= 2.0 && in_drop <= 1.0,
        format!(
            "biased share {:.1}%, adversarial gain {adv_gain:+.2} pts (need >= 2), in-domain drop {in_drop:+.2} pts (need <= 1)",
            share * 100.0
        ),
    )
}

fn a6() -> Verdict {
    let (mut first, mut last) = (0.0, 0.0);
    for seed in 0..5 {
        let c = a5_corpus(seed);
        let table = detect_biased_words(&compute_word_stats(&c.train), c.train.labels(), 3, 0.8).unwrap();
        let partition = mark_biased_examples(&c.train, &table);
        let early = |order: Order| -> f64 {
            let cfg = TrainConfig {
                order,
                partition: Some(partition.clone()),
                ..a5_train_config(seed)
            };
            let curve = train(&c.train, &cfg).unwrap().loss_curve;
            let n = (curve.len() / 10).max(1);
            curve[..n].iter().map(|p| p.loss).sum::<f64>() / n as f64
        };
        first += early(Order::BiasFirst);
        last += early(Order::BiasLast);
    }
    let (first, last) = (first / 5.0, last / 5.0);
    verdict(
        first < last,
        format!("mean loss over first 10% of steps: bias-first {first:.4} < bias-last {last:.4}"),
    )
}

// A7

fn a7() -> Verdict {
    let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
    let map = |v: &[&str]| -> LabelMap { ids.iter().cloned().zip(v.iter().map(|s| s.to_string())).collect() };
    let golds = map(&["0", "1", "0", "1"]);
    let perfect = tendency(&golds, &golds, ids.iter().map(String::as_str), "0").unwrap().value;
    let perfect1 = tendency(&golds, &golds, ids.iter().map(String::as_str), "1").unwrap().value;
    let constant = tendency(&map(&["0"; 4]), &golds, ids.iter().map(String::as_str), "0").unwrap().value;
    let hand = perfect == Some(1.0) && perfect1 == Some(1.0) && constant == Some(2.0);

    let mut positive = 0;
    let mut monotone = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let c = generate(&SynthConfig {
            seed,
            train_size: 10_000,
            test_size: 4_000,
            signal_vocab: 3_000,
            pair_task: true,
            overlap: Some(vec![vec![1.0; 7], vec![5.0, 3.0, 1.0, 1.0, 0.0, 0.0, 0.0]]),
            auto_plants: Some(AutoPlants {
                count: 10,
                degree: 0.9,
                share: 0.3,
                labels: vec![0],
            }),
            ..SynthConfig::default()
        })
        .unwrap();
        let table = detect_biased_words(&compute_word_stats(&c.train), c.train.labels(), 3, 0.8).unwrap();
        let model = train(
            &c.train,
            &TrainConfig {
                epochs: 2,
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap()
        .model;
        let eval = evaluate(&model, &c.test).unwrap();
        let preds: LabelMap = eval.predictions.iter().map(|p| (p.id.clone(), p.label.clone())).collect();
        let golds: LabelMap = c.test.examples().iter().map(|e| (e.id.clone(), e.label.clone())).collect();
        let biased = mark_biased_examples(&c.test, &table).biased;
        let ecfg = ExplainerConfig {
            n_samples: 300,
            seed,
            ..ExplainerConfig::default()
        };
        let rankings = explain_positions(&model, &c.test, &biased, &ecfg).unwrap();
        let focus = find_focus_biased(&c.test, &rankings, &table);
        let overall = tendency_comparison(&preds, &golds, &biased_groups(&c.test, &table), &focus, c.test.labels())
            .unwrap()
            .delta("0")
            .unwrap_or(f64::NAN);
        let strata = stratified_tendency(&preds, &golds, &c.test, &table, &rankings, 5, DistanceUnit::Token)
            .unwrap()
            .deltas("0");
        positive += usize::from(overall > 0.0);
        let mono = strata.len() == 5 && strata.windows(2).all(|w| w[1].1 <= w[0].1);
        monotone += usize::from(mono);
        lines.push(format!(
            "seed {seed}: delta {overall:+.3}, strata [{}]",
            strata.iter().map(|(_, d)| format!("{d:.3}")).collect::<Vec<_>>().join(" ")
        ));
    }
    for l in &lines {
        println!("     {l}");
    }
    verdict(
        hand && positive == 5 && monotone >= 4,
        format!("hand counts {}, delta > 0 in {positive}/5 seeds, non-increasing strata in {monotone}/5 (need >= 4)", if hand { "exact" } else { "WRONG" }),
    )
}

// A8

fn a8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.gen_range(0..=12);
        (0..n).map(|_| ["a", "b", "c", "d"][rng.gen_range(0..4)].to_string()).collect()
    };
    let mut wrong = 0;
    for _ in 0..1000 {
        let (a, b) = (seq(&mut rng), seq(&mut rng));
        wrong += usize::from(levenshtein(&a, &b) != lev_memo(&a, &b));
    }
    let mut axioms = 0;
    for _ in 0..1000 {
        let (a, b, c) = (seq(&mut rng), seq(&mut rng), seq(&mut rng));
        let ab = levenshtein(&a, &b);
        if ab != levenshtein(&b, &a) || levenshtein(&a, &c) > ab + levenshtein(&b, &c) {
            axioms += 1;
        }
    }
    verdict(
        wrong == 0 && axioms == 0,
        format!("oracle mismatches {wrong}/1000, symmetry/triangle violations {axioms}/1000"),
    )
}

// A9

fn a9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for arch in [Architecture::Linear, Architecture::Hidden { width: 4 }] {
        let net = Network {
            inputs: 8,
            outputs: 3,
            arch,
        };
        let mut params = net.init_params(&mut rng);
        for p in &mut params {
            *p += rng.gen_range(-0.5..0.5);
        }
        let xs: Vec<Features> = (0..5)
            .map(|_| {
                let mut x = Features::new();
                for j in 0..8 {
                    if rng.gen_bool(0.5) {
                        x.push((j, rng.gen_range(0.2..1.0)));
                    }
                }
                x
            })
            .collect();
        let batch: Vec<(&Features, usize, f64)> = xs
            .iter()
            .map(|x| (x, rng.gen_range(0..3), rng.gen_range(0.5..1.0)))
            .collect();
        let mut grad = vec![0.0; net.param_count()];
        net.loss_and_grad(&params, &batch, &mut grad);
        let h = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let numeric = (net.loss(&plus, &batch) - net.loss(&minus, &batch)) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((grad[i] - numeric).abs() / scale);
            }
        }
    }
    verdict(worst <= 1e-4, format!("max relative error {worst:.2e} (need <= 1e-4), linear and hidden"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, Duration); 9] = [
        ("A1", a1, Duration::from_secs(1)),
        ("A2", a2, Duration::from_secs(10)),
        ("A3", a3, Duration::from_secs(5)),
        ("A4", a4, Duration::from_secs(30)),
        ("A5", a5, Duration::from_secs(120)),
        ("A6", a6, Duration::from_secs(120)),
        ("A7", a7, Duration::from_secs(60)),
        ("A8", a8, Duration::from_secs(5)),
        ("A9", a9, Duration::from_secs(1)),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == name) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && elapsed <= budget, v.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!pass);
        println!(
            "{name} {} {detail} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
