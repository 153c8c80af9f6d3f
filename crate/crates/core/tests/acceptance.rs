//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when all
//! criteria pass. `cargo test --test acceptance -- 4 5` runs a subset.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use vampire_core::classifier::{
    evaluate, predict_proba, train_classifier, DanBatch, DanConfig, DanModel, FrozenVampire, ScalarMix, TokenIndex,
};
use vampire_core::coherence::{npmi_global, npmi_pair, npmi_topic, CooccurrenceStats};
use vampire_core::corpus::{
    build_vocabulary, count_corpus, sample_labeled_subset, CountVector, Document, Stopwords, Vocabulary,
};
use vampire_core::numerics::dropout::dropout_mask;
use vampire_core::numerics::grad_check::DEFAULT_STEP;
use vampire_core::numerics::{grad_check, Mode, Rng};
use vampire_core::pipeline::{
    run_search, stopping_study, Dist, SearchOptions, SearchSpace, StudyOptions, StudyRecord,
};
use vampire_core::semisup::{nearest_rank, self_train, MAX_ITERATIONS};
use vampire_core::synthetic::{greedy_topic_overlap, PlantedConfig, PlantedCorpus};
use vampire_core::vampire::{
    kl_divergence, pretrain, reconstruction_log_prob, Noise, PretrainOptions, StoppingCriterion, VampireConfig,
    VampireModel,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, outcome: Outcome) -> Outcome {
    let elapsed = start.elapsed();
    match outcome {
        Ok(d) if elapsed >= limit => Err(format!("{d}; took {elapsed:?}, limit {limit:?}")),
        other => other,
    }
}

struct Split {
    vocab: Vocabulary,
    train: Vec<CountVector>,
    val: Vec<CountVector>,
}

fn split_counts(train: &[Document], val: &[Document], vocab_limit: usize) -> Split {
    let vocab = build_vocabulary(train, vocab_limit, &Stopwords::english()).unwrap();
    let train = count_corpus(train, &vocab).vectors;
    let val = count_corpus(val, &vocab).vectors;
    Split { vocab, train, val }
}

fn planted(config: PlantedConfig) -> PlantedCorpus {
    config.generate().unwrap()
}

fn vampire_grad_error(update_background: bool, batchnorm: bool) -> f64 {
    let (v, k) = (20, 3);
    let config = VampireConfig {
        hidden_dim: k,
        encoder_layers: 2,
        z_dropout: 0.3,
        update_background,
        batchnorm,
        vocab_size: v,
        seed: 5,
        ..Default::default()
    };
    let mut rng = Rng::new(17);
    let docs: Vec<CountVector> = (0..4)
        .map(|_| CountVector::from_pairs((0..8).map(|_| (rng.below(v as u64) as u32, 1 + rng.below(3) as u32))))
        .collect();
    let background = VampireModel::background_from_counts(&docs, v);
    let mut model = VampireModel::new(config, &background, "").unwrap();
    // words absent from the batch sit at ln(1e-10), where gradients vanish
    // below finite-difference resolution; the gain moves off its symmetric 1
    for b in model.background.value.data_mut() {
        *b = rng.uniform_range(-4.0, -2.0);
    }
    for (g, b) in model.bn.gamma.value.data_mut().iter_mut().zip(model.bn.beta.value.data_mut()) {
        *g = 0.5 + rng.uniform();
        *b = rng.uniform_range(-1.0, 1.0);
    }
    let refs: Vec<&CountVector> = docs.iter().collect();
    let x = model.batch(&refs).unwrap();
    let noise = Noise::sample(4, k, 0.3, Mode::Train, &mut rng).unwrap();
    let report = grad_check(
        &mut model,
        DEFAULT_STEP,
        |m| {
            let (terms, cache) = m.forward(&x, &noise, Mode::Train, 0.6).unwrap();
            m.backward(&cache).unwrap();
            -terms.objective
        },
        |m| -m.forward(&x, &noise, Mode::Train, 0.6).unwrap().0.objective,
    );
    report.max_relative_error
}

fn dan_grad_error() -> f64 {
    let words: Vec<String> = ["good", "bad", "film", "plot", "great", "awful"].map(String::from).to_vec();
    let vocab = Vocabulary::from_tokens(words.clone()).unwrap();
    let config = VampireConfig {
        hidden_dim: 3,
        encoder_layers: 2,
        vocab_size: words.len(),
        seed: 2,
        ..Default::default()
    };
    let background = vec![-(words.len() as f64).ln(); words.len()];
    let vam = VampireModel::new(config, &background, vocab.checksum()).unwrap();
    let frozen = Arc::new(FrozenVampire::new(vam, vocab).unwrap());
    let doc = |id: &str, toks: &[&str], y: usize| Document::new(id, toks.iter().map(|t| t.to_string()).collect(), Some(y));
    let docs = vec![
        doc("a", &["good", "film", "unseen"], 1),
        doc("b", &["bad", "plot"], 0),
        doc("c", &["great", "great", "awful"], 2),
        doc("d", &["film"], 1),
    ];
    let dan = DanConfig {
        embedding_dim: 4,
        hidden_dim: 5,
        dropout: 0.3,
        seed: 9,
        ..Default::default()
    };
    let mut m = DanModel::new(dan, TokenIndex::build(&docs[..3]), 3, Some(frozen)).unwrap();
    m.mix = Some(ScalarMix::with_logits(&[0.4, -0.1, 0.7]));
    let ids = m.encode(&docs);
    let feats = m.doc_features(&docs).unwrap();
    let batch = DanBatch {
        tokens: ids.iter().map(|v| v.as_slice()).collect(),
        features: feats.iter().collect(),
        labels: docs.iter().map(|d| d.label.unwrap()).collect(),
    };
    let mask = dropout_mask(4, 5, 0.3, &mut Rng::new(4)).unwrap();
    let report = grad_check(
        &mut m,
        DEFAULT_STEP,
        |m| {
            let (loss, cache) = m.forward(&batch, Some(&mask)).unwrap();
            m.backward(&batch, &cache).unwrap();
            loss
        },
        |m| m.forward(&batch, Some(&mask)).unwrap().0,
    );
    report.max_relative_error
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    // With batchnorm in train mode the background gradient is structurally
    // zero, so the background is checked in a second run without it.
    let with_bn = vampire_grad_error(false, true);
    let with_bg = vampire_grad_error(true, false);
    let dan = dan_grad_error();
    let worst = with_bn.max(with_bg).max(dan);
    within(
        Duration::from_secs(10),
        start,
        check(
            worst < 1e-4,
            format!("max rel. error: vampire+bn {with_bn:.2e}, vampire+background {with_bg:.2e}, dan+mix {dan:.2e}"),
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    if kl_divergence(&[0.0, 0.0], &[1.0, 1.0]) != 0.0 {
        failures.push("KL(0,1) != 0");
    }
    if (kl_divergence(&[1.0, 0.0], &[1.0, 1.0]) - 0.5).abs() > 1e-12 {
        failures.push("KL([1,0],[1,1]) != 0.5");
    }
    let log_eta = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
    let lp = reconstruction_log_prob(&[(0, 2.0), (2, 1.0)], &log_eta);
    if (lp - -2.7726).abs() > 1e-4 {
        failures.push("log p(c=[2,0,1]) != -2.7726");
    }
    let stats = |docs: &[&[u32]]| {
        let counts: Vec<CountVector> = docs.iter().map(|d| CountVector::from_pairs(d.iter().map(|&w| (w, 1)))).collect();
        CooccurrenceStats::from_counts(&counts, 3).unwrap()
    };
    let perfect = npmi_pair(0, 1, &stats(&[&[0, 1], &[2]])).unwrap();
    let independent = npmi_pair(0, 1, &stats(&[&[0, 1], &[0, 2], &[1, 2], &[2]])).unwrap();
    let disjoint = npmi_pair(0, 1, &stats(&[&[0], &[1]])).unwrap();
    if perfect != Some(1.0) {
        failures.push("perfect pair != +1");
    }
    if independent != Some(0.0) {
        failures.push("independent pair != 0");
    }
    if disjoint != Some(-1.0) {
        failures.push("disjoint pair != -1");
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("KL 0 / 0.5, log p {lp:.6}, npmi +1 / 0 / -1")
        } else {
            failures.join(", ")
        },
    )
}

/// Document-frequency NPMI computed straight from token lists.
fn oracle_npmi_topic(docs: &[Vec<u32>], topic: &[u32]) -> Option<f64> {
    let n = docs.len() as f64;
    let has = |d: &Vec<u32>, w: u32| d.contains(&w);
    let mut scores = Vec::new();
    for a in 0..topic.len() {
        for b in a + 1..topic.len() {
            let (i, j) = (topic[a], topic[b]);
            let pi = docs.iter().filter(|d| has(d, i)).count() as f64 / n;
            let pj = docs.iter().filter(|d| has(d, j)).count() as f64 / n;
            let pij = docs.iter().filter(|d| has(d, i) && has(d, j)).count() as f64 / n;
            if pi == 0.0 || pj == 0.0 {
                continue;
            }
            scores.push(if pij == 0.0 {
                -1.0
            } else if pij == 1.0 {
                1.0
            } else {
                (pij / (pi * pj)).ln() / -pij.ln()
            });
        }
    }
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst: f64 = 0.0;
    let mut topics_checked = 0;
    for corpus in 0..100 {
        let v = 2 + rng.below(29) as usize;
        let d = 1 + rng.below(50) as usize;
        let docs: Vec<Vec<u32>> = (0..d)
            .map(|_| {
                let len = 1 + rng.below(12);
                (0..len).map(|_| rng.below(v as u64) as u32).collect()
            })
            .collect();
        let counts: Vec<CountVector> = docs.iter().map(|t| CountVector::from_pairs(t.iter().map(|&w| (w, 1)))).collect();
        let stats = CooccurrenceStats::from_counts(&counts, v).unwrap();
        for i in 0..v as u32 {
            let df = docs.iter().filter(|t| t.contains(&i)).count() as u32;
            if stats.doc_freq(i) != df {
                return Err(format!("corpus {corpus}: doc_freq({i}) {} vs {df}", stats.doc_freq(i)));
            }
            for j in 0..v as u32 {
                if i == j {
                    continue;
                }
                let pf = docs.iter().filter(|t| t.contains(&i) && t.contains(&j)).count() as u32;
                if stats.pair_freq(i, j) != pf {
                    return Err(format!("corpus {corpus}: pair_freq({i},{j}) {} vs {pf}", stats.pair_freq(i, j)));
                }
            }
        }
        for _ in 0..5 {
            let size = 2 + rng.below((v as u64 - 1).min(9)) as usize;
            let mut ids: Vec<u32> = (0..v as u32).collect();
            rng.shuffle(&mut ids);
            let topic = &ids[..size];
            let ours = npmi_topic(topic, &stats).unwrap();
            let oracle = oracle_npmi_topic(&docs, topic);
            match (ours, oracle) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => return Err(format!("corpus {corpus}: definedness differs: {ours:?} vs {oracle:?}")),
            }
            topics_checked += 1;
        }
    }
    within(
        Duration::from_secs(30),
        start,
        check(
            worst <= 1e-9,
            format!("100 corpora, {topics_checked} topics, max |diff| {worst:.1e}"),
        ),
    )
}

fn recovery_config(seed: u64) -> VampireConfig {
    VampireConfig {
        hidden_dim: 5,
        encoder_layers: 2,
        learning_rate: 3e-3,
        max_epochs: 200,
        patience: 25,
        stopping_criterion: StoppingCriterion::Npmi,
        seed,
        ..Default::default()
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut passing = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let corpus = planted(PlantedConfig {
            seed,
            ..Default::default()
        });
        let (train, val) = corpus.documents.split_at(1600);
        let s = split_counts(train, val, 30_000);
        let config = recovery_config(seed);
        let stats = CooccurrenceStats::from_counts(&s.val, s.vocab.len()).unwrap();
        let background = VampireModel::background_from_counts(&s.train, s.vocab.len());
        let random = VampireModel::new(config.clone(), &background, s.vocab.checksum()).unwrap();
        let baseline = npmi_global(&random, &stats).unwrap();
        let (model, _) = pretrain(&s.train, &s.val, &s.vocab, &config, &PretrainOptions::default()).unwrap();
        let learned = npmi_global(&model, &stats).unwrap();
        let overlap = greedy_topic_overlap(&model.topics(&s.vocab, 10).unwrap(), &corpus.top_words(10));
        let gain = learned - baseline;
        if gain >= 0.1 && overlap >= 0.5 {
            passing += 1;
        }
        rows.push(format!("seed {seed}: gain {gain:.3} overlap {overlap:.2}"));
    }
    within(
        Duration::from_secs(600),
        start,
        check(passing >= 3, format!("{passing}/5 seeds pass ({})", rows.join("; "))),
    )
}

/// Planted corpus whose 200-label task is hard enough that unlabeled text
/// can help: larger vocabulary, short documents.
fn downstream_corpus(seed: u64) -> PlantedCorpus {
    planted(PlantedConfig {
        n_docs: 5000,
        vocab_size: 2000,
        core_words: 400,
        min_len: 10,
        max_len: 20,
        seed,
        ..Default::default()
    })
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (mut base_total, mut vampire_total) = (0.0, 0.0);
    let mut rows = Vec::new();
    for seed in 0..5 {
        let corpus = downstream_corpus(seed);
        let n = corpus.documents.len();
        let (pool, test) = corpus.documents.split_at(n - 1000);
        let cut = pool.len() * 9 / 10;
        let s = split_counts(&pool[..cut], &pool[cut..], 30_000);
        let (model, _) = pretrain(&s.train, &s.val, &s.vocab, &recovery_config(seed), &PretrainOptions::default()).unwrap();
        let sample = sample_labeled_subset(pool, 200, seed).unwrap();
        let val = &sample.remainder[..200];
        let dan = DanConfig {
            patience: 10,
            seed,
            ..Default::default()
        };
        let (base, _) = train_classifier(&sample.labeled, val, &dan, None).unwrap();
        let frozen = Arc::new(FrozenVampire::new(model, s.vocab).unwrap());
        let (with, _) = train_classifier(&sample.labeled, val, &dan, Some(frozen)).unwrap();
        let (b, v) = (evaluate(&base, test).unwrap().accuracy, evaluate(&with, test).unwrap().accuracy);
        base_total += b;
        vampire_total += v;
        rows.push(format!("{:.1}/{:.1}", 100.0 * b, 100.0 * v));
    }
    let gain = 100.0 * (vampire_total - base_total) / 5.0;
    within(
        Duration::from_secs(900),
        start,
        check(
            gain >= 5.0,
            format!(
                "baseline {:.1}%, with features {:.1}%, gain {gain:.1} points (per seed {})",
                20.0 * base_total,
                20.0 * vampire_total,
                rows.join(", ")
            ),
        ),
    )
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted(PlantedConfig {
        seed: 11,
        ..Default::default()
    });
    let docs = &corpus.documents;
    let s = split_counts(&docs[..1400], &docs[1400..1600], 30_000);
    let space = SearchSpace {
        hidden_dim: Dist::UniformInt { lo: 5, hi: 10 },
        max_epochs: Dist::Fixed(15),
        patience: Dist::Fixed(3),
        learning_rate: Dist::LogUniform { lo: 1e-3, hi: 1e-2 },
        ..Default::default()
    };
    let log = dir.path().join("study.jsonl");
    let options = StudyOptions {
        trials_per_criterion: 10,
        master_seed: 6,
        space,
        dan: DanConfig {
            max_epochs: 30,
            ..Default::default()
        },
        parallelism: 1,
        log: Some(log.clone()),
    };
    let report = stopping_study(&s.train, &s.val, &s.vocab, &docs[1600..1800], &docs[1800..], &options).unwrap();
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let complete = lines
        .iter()
        .all(|r| ["npmi", "val_nll", "downstream_acc"].iter().all(|k| r[k].is_f64()));
    let per = |c: StoppingCriterion| report.records.iter().filter(|r: &&StudyRecord| r.criterion == c).count();
    let (n_npmi, n_nll) = (per(StoppingCriterion::Npmi), per(StoppingCriterion::Nll));
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    check(
        n_npmi == 10 && n_nll == 10 && lines.len() == 20 && complete,
        format!(
            "{n_npmi} npmi + {n_nll} nll trials logged; acc variance npmi {:.2e} vs nll {:.2e}; \
             spearman npmi~acc {}, nll~acc {}, npmi~nll {}",
            report.npmi_selected_acc_variance,
            report.nll_selected_acc_variance,
            fmt(report.npmi_vs_acc),
            fmt(report.nll_vs_acc),
            fmt(report.npmi_vs_nll)
        ),
    )
}

/// Two classes with disjoint cue vocabularies and shared filler words.
fn separable_docs(prefix: &str, n: usize, rng: &mut Rng) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let y = i % 2;
            let mut tokens: Vec<String> = (0..4)
                .map(|_| format!("zq{}{}", ["pos", "neg"][y], rng.below(60)))
                .collect();
            tokens.extend((0..4).map(|_| format!("zqfill{}", rng.below(100))));
            Document::new(format!("{prefix}{i}"), tokens, Some(y))
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let probs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let threshold = nearest_rank(&probs, 9, 10);
    if threshold != Some(0.9) {
        return Err(format!("nearest-rank 90th percentile of 0.1..1.0 is {threshold:?}"));
    }
    let mut rng = Rng::new(70);
    let labeled = separable_docs("l", 10, &mut rng);
    let unlabeled: Vec<Document> = separable_docs("u", 1000, &mut rng)
        .into_iter()
        .map(|d| Document { label: None, ..d })
        .collect();
    let val = separable_docs("v", 100, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("iterations.jsonl");
    let config = DanConfig {
        seed: 7,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let outcome = self_train(&labeled, &unlabeled, &val, &config, None, Some(&log_path)).unwrap();
    let logged: Vec<f64> = std::fs::read_to_string(&log_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["val_accuracy"].as_f64().unwrap())
        .collect();
    let best = logged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first_best = logged.iter().position(|&a| a == best).unwrap();
    let pseudo = outcome.log.iter().map(|r| r.n_pseudo).max().unwrap_or(0);
    check(
        logged.len() <= MAX_ITERATIONS
            && logged.len() == outcome.log.len()
            && outcome.best_iteration == first_best
            && outcome.model.val_accuracy == best
            && pseudo > 0,
        format!(
            "threshold 0.9; {} rounds, val accuracies {logged:?}, returned round {} (max {best}), up to {pseudo} pseudo-labels",
            logged.len(),
            outcome.best_iteration
        ),
    )
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let corpus = planted(PlantedConfig {
        n_docs: 500,
        seed: 8,
        ..Default::default()
    });
    let docs = &corpus.documents;
    let s = split_counts(&docs[..400], &docs[400..], 30_000);
    let config = VampireConfig {
        hidden_dim: 5,
        max_epochs: 4,
        batch_size: 32,
        z_dropout: 0.2,
        seed: 3,
        ..Default::default()
    };
    let mut failures = Vec::new();
    for name in ["a.vam", "b.vam"] {
        let (m, _) = pretrain(&s.train, &s.val, &s.vocab, &config, &PretrainOptions::default()).unwrap();
        m.save(&path(name)).unwrap();
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    if read(&path("a.vam")) != read(&path("b.vam")) {
        failures.push("document-model checkpoints differ");
    }

    let (model, _) = pretrain(&s.train, &s.val, &s.vocab, &config, &PretrainOptions::default()).unwrap();
    let loaded = VampireModel::load(&path("a.vam")).unwrap();
    let refs: Vec<&CountVector> = s.train.iter().chain(&s.val).collect();
    let (x, y) = (model.extract_features(&refs).unwrap(), loaded.extract_features(&refs).unwrap());
    let same_states = x.degenerate == y.degenerate
        && bits(x.states.theta.data()) == bits(y.states.theta.data())
        && bits(x.states.mu.data()) == bits(y.states.mu.data())
        && x.states.hidden.iter().zip(&y.states.hidden).all(|(a, b)| bits(a.data()) == bits(b.data()));
    if !same_states {
        failures.push("features change across a checkpoint round trip");
    }

    let frozen = Arc::new(FrozenVampire::new(loaded, s.vocab.clone()).unwrap());
    let dan = DanConfig {
        max_epochs: 5,
        seed: 4,
        ..Default::default()
    };
    for name in ["a.dan", "b.dan"] {
        let (m, _) = train_classifier(&docs[..100], &docs[100..150], &dan, Some(frozen.clone())).unwrap();
        m.save(&path(name)).unwrap();
    }
    if read(&path("a.dan")) != read(&path("b.dan")) {
        failures.push("classifier checkpoints differ");
    }
    let (m, _) = train_classifier(&docs[..100], &docs[100..150], &dan, Some(frozen.clone())).unwrap();
    let back = DanModel::load(&path("a.dan"), Some(frozen)).unwrap();
    let test = &docs[400..];
    if bits(predict_proba(&m, test).unwrap().data()) != bits(predict_proba(&back, test).unwrap().data()) {
        failures.push("classifier predictions change across a checkpoint round trip");
    }

    let space = SearchSpace {
        hidden_dim: Dist::UniformInt { lo: 3, hi: 8 },
        max_epochs: Dist::Fixed(3),
        ..Default::default()
    };
    let search = |parallelism| {
        let options = SearchOptions {
            n_trials: 4,
            parallelism,
            master_seed: 21,
            ..Default::default()
        };
        let mut outcome = run_search(&space, &s.train, &s.val, &s.vocab, &options).unwrap();
        for t in outcome.trials.iter_mut().chain(std::iter::once(&mut outcome.best)) {
            t.seconds = 0.0;
        }
        outcome
    };
    let serial = search(1);
    if serial != search(4) {
        failures.push("search table depends on parallelism");
    }
    let configs: BTreeSet<usize> = serial.trials.iter().map(|t| t.config.hidden_dim).collect();
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "byte-identical .vam and .dan, exact feature round trip, 4-trial search equal at parallelism 1 and 4 \
                 (hidden dims {configs:?})"
            )
        } else {
            failures.join(", ")
        },
    )
}

fn criterion_9() -> Outcome {
    let corpus = planted(PlantedConfig {
        n_topics: 20,
        vocab_size: 5000,
        core_words: 100,
        n_docs: 11_000,
        min_len: 50,
        max_len: 150,
        seed: 1,
        ..Default::default()
    });
    let (train, val) = corpus.documents.split_at(10_000);
    let s = split_counts(train, val, 5000);
    let (v, k, layers) = (s.vocab.len(), 64, 2);
    let config = VampireConfig {
        hidden_dim: k,
        encoder_layers: layers,
        max_epochs: 50,
        patience: 50,
        vocab_size: 5000,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (model, log) = pool
        .install(|| pretrain(&s.train, &s.val, &s.vocab, &config, &PretrainOptions::default()))
        .unwrap();
    let elapsed = start.elapsed();
    // first encoder layer, further encoder layers, μ and log σ projections,
    // topics, batchnorm scale and shift; the background is frozen
    let closed_form = (v * k + k) + (layers - 1) * (k * k + k) + 2 * (k * k + k) + k * v + 2 * v;
    let counted = model.count_parameters();
    check(
        v == 5000 && log.records.len() == 50 && elapsed < Duration::from_secs(900) && counted == closed_form,
        format!(
            "V {v}, K {k}: {} epochs in {:.1} min ({:.1} s/epoch), {counted} parameters (closed form {closed_form})",
            log.records.len(),
            elapsed.as_secs_f64() / 60.0,
            elapsed.as_secs_f64() / log.records.len().max(1) as f64
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", criterion_1),
        (2, "analytic anchors", criterion_2),
        (3, "npmi oracle equivalence", criterion_3),
        (4, "planted-topic recovery", criterion_4),
        (5, "downstream gain", criterion_5),
        (6, "stopping-criterion study", criterion_6),
        (7, "self-training semantics", criterion_7),
        (8, "determinism and persistence", criterion_8),
        (9, "efficiency", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n} ({name}): {status} [{secs:.1}s] {detail}");
        if outcome.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
