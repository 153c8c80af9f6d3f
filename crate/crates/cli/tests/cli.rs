use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vampire_core::corpus::RawRecord;
use vampire_core::synthetic::PlantedConfig;

fn vampire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vampire"))
        .args(args)
        .env("VAMPIRE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vampire(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_jsonl(path: &Path, records: &[RawRecord]) {
    let text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = PlantedConfig {
            n_docs: 400,
            seed: 3,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let records = corpus.records();
        write_jsonl(&dir.path().join("unlabeled.jsonl"), &records[..300]);
        write_jsonl(&dir.path().join("dev.jsonl"), &records[300..]);
        let config = r#"{"vampire": {"hidden_dim": 5, "max_epochs": 4, "batch_size": 32}}"#;
        std::fs::write(dir.path().join("c.json"), config).unwrap();
        write_jsonl(&dir.path().join("train.jsonl"), &separable(0, 40));
        write_jsonl(&dir.path().join("val.jsonl"), &separable(100, 20));
        write_jsonl(&dir.path().join("test.jsonl"), &separable(200, 20));
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn separable(offset: usize, n: usize) -> Vec<RawRecord> {
    let pos = ["splendid", "wonderful", "delightful", "superb"];
    let neg = ["dreadful", "terrible", "horrible", "awful"];
    (0..n)
        .map(|i| {
            let (words, label) = if i % 2 == 0 { (&pos, "pos") } else { (&neg, "neg") };
            RawRecord {
                id: Some(format!("s{}", offset + i)),
                text: format!("the movie was {} and {}", words[i % 4], words[(i / 2) % 4]),
                label: Some(label.into()),
            }
        })
        .collect()
}

#[test]
fn help_lists_every_subcommand() {
    for sub in ["preprocess", "pretrain", "search", "topics", "train", "selftrain", "evaluate", "experiment"] {
        let out = vampire(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--seed") && text.contains("--config"), "{sub}");
    }
    assert!(String::from_utf8_lossy(&vampire(&["topics", "--help"]).stdout).contains("[default: 10]"));
}

#[test]
fn usage_and_runtime_exit_codes() {
    assert_eq!(vampire(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vampire(&["topics", "--nope"]).status.code(), Some(1));
    assert_eq!(vampire(&["train"]).status.code(), Some(1));
    let out = vampire(&["topics", "--model", "/does/not/exist.vam"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/does/not/exist.vam"));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_vampire"))
        .args(["topics", "--model", "x.vam"])
        .env("VAMPIRE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"search": {"space": {"hiden_dim": {"fixed": 8}}}}"#).unwrap();
    let out = vampire(&["--config", s(&typo), "topics", "--model", "x.vam"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_dim"));
}

#[test]
fn preprocess_writes_vocab_and_counts() {
    let f = Fixture::new();
    let out_dir = f.path("prep");
    let v = ok_json(&["preprocess", "--input", s(&f.path("unlabeled.jsonl")), "--out-dir", s(&out_dir)]);
    assert_eq!(v["documents"], 300);
    assert!(v["vocab_size"].as_u64().unwrap() > 100);
    let cache = vampire_core::corpus::read_count_cache(&out_dir.join("counts.bin")).unwrap();
    assert_eq!(cache.len(), 300);
    let vocab = vampire_core::corpus::Vocabulary::read(&out_dir.join("vocab.txt")).unwrap();
    assert_eq!(v["vocab_checksum"], vocab.checksum());
}

#[test]
fn pretrain_is_reproducible_and_topics_print() {
    let f = Fixture::new();
    let run = |out: &Path| {
        ok_json(&[
            "pretrain",
            "--config",
            s(&f.path("c.json")),
            "--train",
            s(&f.path("unlabeled.jsonl")),
            "--val",
            s(&f.path("dev.jsonl")),
            "--out",
            s(out),
            "--vocab",
            s(&f.path("vocab.txt")),
            "--seed",
            "1",
        ])
    };
    let a = run(&f.path("a.vam"));
    run(&f.path("b.vam"));
    assert_eq!(std::fs::read(f.path("a.vam")).unwrap(), std::fs::read(f.path("b.vam")).unwrap());
    assert!(a["best_epoch"].as_u64().unwrap() >= 1);
    let log = std::fs::read_to_string(f.path("a.log.jsonl")).unwrap();
    assert_eq!(log.lines().count() as u64, a["epochs"].as_u64().unwrap());

    let t = ok_json(&[
        "topics",
        "--model",
        s(&f.path("a.vam")),
        "--vocab",
        s(&f.path("vocab.txt")),
        "--top",
        "10",
        "--reference",
        s(&f.path("dev.jsonl")),
    ]);
    let topics = t["topics"].as_array().unwrap();
    assert_eq!(topics.len(), 5);
    for topic in topics {
        assert_eq!(topic["words"].as_array().unwrap().len(), 10);
    }
    assert!(t["npmi"].is_f64());
}

#[test]
fn train_and_evaluate_separable_toy() {
    let f = Fixture::new();
    let model = f.path("m.dan");
    let config = r#"{"classifier": {"learning_rate": 0.01, "patience": 20}}"#;
    std::fs::write(f.path("dan.json"), config).unwrap();
    let t = ok_json(&[
        "train",
        "--config",
        s(&f.path("dan.json")),
        "--train",
        s(&f.path("train.jsonl")),
        "--val",
        s(&f.path("val.jsonl")),
        "--out",
        s(&model),
    ]);
    assert_eq!(t["val_accuracy"], 1.0);
    assert!(f.path("m.dan.vocab").exists());
    let e = ok_json(&["evaluate", "--model", s(&model), "--input", s(&f.path("test.jsonl"))]);
    assert_eq!(e["accuracy"], 1.0);
    assert_eq!(e["n"], 20);

    let report = f.path("report.json");
    let out = vampire(&["evaluate", "--model", s(&model), "--input", s(&f.path("test.jsonl")), "--out", s(&report)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let saved: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(saved["accuracy"], 1.0);
}

#[test]
fn features_selftraining_search_and_experiment() {
    let f = Fixture::new();
    let vam = f.path("v.vam");
    ok_json(&[
        "pretrain",
        "--config",
        s(&f.path("c.json")),
        "--train",
        s(&f.path("unlabeled.jsonl")),
        "--val",
        s(&f.path("dev.jsonl")),
        "--out",
        s(&vam),
    ]);
    assert!(f.path("v.vocab.txt").exists());

    let dan = f.path("f.dan");
    let (train, val, unlabeled) = (f.path("train.jsonl"), f.path("val.jsonl"), f.path("unlabeled.jsonl"));
    let args = [
        "--train",
        s(&train),
        "--val",
        s(&val),
        "--vampire",
        s(&vam),
        "--max-epochs",
        "3",
    ];
    let mut train_args = vec!["train", "--out", s(&dan)];
    train_args.extend(args);
    ok_json(&train_args);
    // The classifier refuses to load without the document model it was trained with.
    let out = vampire(&["evaluate", "--model", s(&dan), "--input", s(&f.path("test.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    let e = ok_json(&["evaluate", "--model", s(&dan), "--input", s(&f.path("test.jsonl")), "--vampire", s(&vam)]);
    assert!(e["accuracy"].as_f64().unwrap() >= 0.0);

    let st = f.path("st.dan");
    let mut st_args = vec!["selftrain", "--out", s(&st), "--unlabeled", s(&unlabeled)];
    st_args.extend(args);
    let r = ok_json(&st_args);
    let iterations = r["iterations"].as_array().unwrap();
    assert!(!iterations.is_empty() && iterations.len() <= 5);
    assert!(f.path("st.iterations.jsonl").exists());

    let space = r#"{"vampire": {"vocab_size": 500},
        "search": {"n_trials": 2, "space": {"hidden_dim": {"uniform_int": {"lo": 3, "hi": 6}},
                   "max_epochs": {"fixed": 2}, "update_background": {"fixed": false}}}}"#;
    std::fs::write(f.path("search.json"), space).unwrap();
    let best = f.path("best.vam");
    let sr = ok_json(&[
        "search",
        "--config",
        s(&f.path("search.json")),
        "--train",
        s(&f.path("unlabeled.jsonl")),
        "--val",
        s(&f.path("dev.jsonl")),
        "--out",
        s(&best),
    ]);
    assert!(best.exists());
    assert_eq!(sr["n_failed"], 0);
    let table = std::fs::read_to_string(f.path("best.trials").join("trials.jsonl")).unwrap();
    assert_eq!(table.lines().count(), 2);

    let protocol = r#"{"label_budgets": [10, 20], "seeds": [0, 1], "methods": ["baseline", "vampire"]}"#;
    std::fs::write(f.path("protocol.json"), protocol).unwrap();
    let csv = f.path("grid.csv");
    let x = ok_json(&[
        "experiment",
        "--pool",
        s(&f.path("train.jsonl")),
        "--val",
        s(&f.path("val.jsonl")),
        "--test",
        s(&f.path("test.jsonl")),
        "--protocol",
        s(&f.path("protocol.json")),
        "--vampire",
        s(&vam),
        "--csv",
        s(&csv),
        "--max-epochs",
        "3",
    ]);
    assert_eq!(x["cells"].as_array().unwrap().len(), 4);
    let grid = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "method,10,20");
    assert_eq!(grid.lines().count(), 3);
}
