use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use vampire_core::classifier::{evaluate, train_classifier, DanConfig, DanModel, FrozenVampire};
use vampire_core::coherence::{build_stats, npmi_topic};
use vampire_core::corpus::{
    build_vocabulary, count_corpus, ingest, read_jsonl, write_count_cache, Document, LabelSet, RawRecord, Stopwords,
    Vocabulary,
};
use vampire_core::pipeline::{run_experiment, run_search, ExperimentData, Protocol, SearchOptions};
use vampire_core::semisup::self_train;
use vampire_core::vampire::{pretrain, PretrainOptions, VampireModel};

use crate::config::FileConfig;
use crate::{
    ClassifierArgs, Cli, Command, CorpusArgs, EvaluateArgs, ExperimentArgs, PreprocessArgs, PretrainArgs, SearchArgs,
    SelftrainArgs, TopicsArgs, TrainArgs, VampireArgs,
};

type Outcome<T = ()> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn run(cli: Cli) -> Outcome {
    let mut cfg = FileConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.vampire.seed = seed;
        cfg.classifier.seed = seed;
    }
    let seed = cli.global.seed.unwrap_or(cfg.vampire.seed);
    match cli.command {
        Command::Preprocess(a) => preprocess(a, cfg),
        Command::Pretrain(a) => pretrain_cmd(a, cfg),
        Command::Search(a) => search(a, cfg, seed),
        Command::Topics(a) => topics(a),
        Command::Train(a) => train(a, cfg),
        Command::Selftrain(a) => selftrain(a, cfg),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => experiment(a, cfg),
    }
}

fn echo_config(name: &str, value: &impl serde::Serialize) {
    log::info!("effective {name} config: {}", serde_json::to_string(value).unwrap_or_default());
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(err)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn stopwords(cfg: &FileConfig) -> Outcome<Stopwords> {
    match &cfg.corpus.stopwords {
        Some(p) => Stopwords::from_file(p).map_err(err),
        None => Ok(Stopwords::english()),
    }
}

fn read_records(paths: &[&Path]) -> Outcome<Vec<RawRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_jsonl(p).map_err(err)?);
    }
    Ok(out)
}

fn unlabeled_docs(path: &Path) -> Outcome<Vec<Document>> {
    let mut records = read_records(&[path])?;
    for r in records.iter_mut() {
        r.label = None;
    }
    let ing = ingest(&records, &LabelSet::default()).map_err(err)?;
    if ing.empty_documents > 0 {
        log::warn!("{}: {} documents are empty after tokenization", path.display(), ing.empty_documents);
    }
    Ok(ing.documents)
}

fn labeled_docs(path: &Path, labels: &LabelSet) -> Outcome<Vec<Document>> {
    let records = read_records(&[path])?;
    if let Some(r) = records.iter().find(|r| r.label.is_none()) {
        return Err(format!("{}: record `{}` has no label", path.display(), r.id.as_deref().unwrap_or("?")));
    }
    Ok(ingest(&records, labels).map_err(err)?.documents)
}

fn preprocess(a: PreprocessArgs, cfg: FileConfig) -> Outcome {
    let size = a.vocab_size.unwrap_or(cfg.vampire.vocab_size);
    echo_config("corpus", &json!({"vocab_size": size, "stopwords": cfg.corpus.stopwords}));
    let paths: Vec<&Path> = a.input.iter().map(PathBuf::as_path).collect();
    let records = read_records(&paths)?;
    let labels = LabelSet::from_records(&records);
    let ing = ingest(&records, &labels).map_err(err)?;
    let vocab = build_vocabulary(&ing.documents, size, &stopwords(&cfg)?).map_err(err)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| format!("{}: {e}", a.out_dir.display()))?;
    vocab.write(&a.out_dir.join("vocab.txt")).map_err(err)?;
    let counted = count_corpus(&ing.documents, &vocab);
    let cache: Vec<_> = ing.documents.iter().map(|d| d.id.clone()).zip(counted.vectors.iter().cloned()).collect();
    write_count_cache(&a.out_dir.join("counts.bin"), &cache).map_err(err)?;
    emit(
        &json!({
            "documents": ing.documents.len(),
            "empty_documents": ing.empty_documents,
            "degenerate_count_vectors": counted.degenerate,
            "oov_tokens": counted.oov_tokens,
            "vocab_size": vocab.len(),
            "vocab_checksum": vocab.checksum(),
            "labels": labels.names(),
        }),
        None,
    )
}

/// Reads `--vocab` if it exists, otherwise builds it from the training
/// documents and writes it there.
fn pretraining_inputs(
    c: &CorpusArgs,
    out: &Path,
    vocab_size: usize,
    cfg: &FileConfig,
) -> Outcome<(Vocabulary, PathBuf, Vec<Document>, Vec<Document>)> {
    let train = unlabeled_docs(&c.train)?;
    let val = unlabeled_docs(&c.val)?;
    let vocab_path = c.vocab.clone().unwrap_or_else(|| sibling(out, "vocab.txt"));
    let vocab = if vocab_path.exists() {
        Vocabulary::read(&vocab_path).map_err(err)?
    } else {
        let v = build_vocabulary(&train, vocab_size, &stopwords(cfg)?).map_err(err)?;
        v.write(&vocab_path).map_err(err)?;
        v
    };
    Ok((vocab, vocab_path, train, val))
}

fn pretrain_cmd(a: PretrainArgs, mut cfg: FileConfig) -> Outcome {
    let v = &mut cfg.vampire;
    if let Some(x) = a.hidden_dim {
        v.hidden_dim = x;
    }
    if let Some(x) = a.encoder_layers {
        v.encoder_layers = x;
    }
    if let Some(x) = &a.kl_schedule {
        v.kl_schedule.kind = x.parse().map_err(err)?;
    }
    if let Some(x) = a.learning_rate {
        v.learning_rate = x;
    }
    if let Some(x) = a.max_epochs {
        v.max_epochs = x;
    }
    if let Some(x) = a.patience {
        v.patience = x;
    }
    if let Some(x) = &a.criterion {
        v.stopping_criterion = x.parse().map_err(err)?;
    }
    v.validate().map_err(err)?;
    echo_config("vampire", &cfg.vampire);
    let (vocab, vocab_path, train, val) = pretraining_inputs(&a.corpus, &a.out, cfg.vampire.vocab_size, &cfg)?;
    let tc = count_corpus(&train, &vocab).vectors;
    let vc = count_corpus(&val, &vocab).vectors;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.jsonl"));
    let options = PretrainOptions {
        checkpoint: Some(a.out.clone()),
        log: Some(log_path.clone()),
    };
    let (model, log) = pretrain(&tc, &vc, &vocab, &cfg.vampire, &options).map_err(err)?;
    emit(
        &json!({
            "checkpoint": a.out,
            "vocab": vocab_path,
            "log": log_path,
            "best_epoch": log.best_epoch,
            "epochs": log.records.len(),
            "stopped_early": log.stopped_early,
            "criterion": cfg.vampire.stopping_criterion,
            "criterion_value": model.criterion_value,
        }),
        None,
    )
}

fn search(a: SearchArgs, cfg: FileConfig, seed: u64) -> Outcome {
    let mut s = cfg.search.clone();
    if let Some(x) = a.trials {
        s.n_trials = x;
    }
    if let Some(x) = a.parallelism {
        s.parallelism = x;
    }
    if let Some(x) = &a.criterion {
        s.criterion = x.parse().map_err(err)?;
    }
    s.parallelism = s.parallelism.min(rayon::current_num_threads()).max(1);
    s.space.validate().map_err(err)?;
    echo_config("search", &json!({"search": s, "master_seed": seed}));
    // One vocabulary for all trials, sized by vampire.vocab_size; a sampled
    // vocab_size is recorded with the trial but does not resize it.
    let (vocab, vocab_path, train, val) = pretraining_inputs(&a.corpus, &a.out, cfg.vampire.vocab_size, &cfg)?;
    let tc = count_corpus(&train, &vocab).vectors;
    let vc = count_corpus(&val, &vocab).vectors;
    let out_dir = a.out_dir.clone().unwrap_or_else(|| sibling(&a.out, "trials"));
    let options = SearchOptions {
        n_trials: s.n_trials,
        parallelism: s.parallelism,
        master_seed: seed,
        criterion: s.criterion,
        out_dir: Some(out_dir.clone()),
    };
    let outcome = run_search(&s.space, &tc, &vc, &vocab, &options).map_err(err)?;
    let best = outcome.best.checkpoint.as_ref().ok_or("best trial has no checkpoint")?;
    std::fs::copy(best, &a.out).map_err(|e| format!("{}: {e}", best.display()))?;
    emit(
        &json!({
            "checkpoint": a.out,
            "vocab": vocab_path,
            "trials_dir": out_dir,
            "best": outcome.best,
            "n_failed": outcome.trials.iter().filter(|t| t.failed).count(),
        }),
        None,
    )
}

fn topics(a: TopicsArgs) -> Outcome {
    if a.top == 0 {
        return Err("--top must be positive".into());
    }
    let model = VampireModel::load(&a.model).map_err(err)?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| sibling(&a.model, "vocab.txt"));
    let vocab = Vocabulary::read(&vocab_path).map_err(err)?;
    FrozenVampire::new(model.clone(), vocab.clone()).map_err(err)?;
    let n = a.top.min(vocab.len());
    let ids = model.topic_ids(n);
    let stats = match &a.reference {
        Some(p) => Some(build_stats(&unlabeled_docs(p)?, &vocab).map_err(err)?),
        None => None,
    };
    let mut scores = Vec::new();
    let mut out = Vec::new();
    for (k, topic) in ids.iter().enumerate() {
        let words: Vec<&str> = topic.iter().map(|&i| vocab.token(i).unwrap_or("?")).collect();
        let npmi = match &stats {
            Some(s) if topic.len() >= 2 => npmi_topic(topic, s).map_err(err)?,
            _ => None,
        };
        if let Some(v) = npmi {
            scores.push(v);
        }
        out.push(json!({"topic": k, "words": words, "npmi": npmi}));
    }
    let global = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    emit(&json!({"topics": out, "npmi": global}), None)
}

fn classifier_config(mut c: DanConfig, a: &ClassifierArgs) -> Outcome<DanConfig> {
    if let Some(x) = a.learning_rate {
        c.learning_rate = x;
    }
    if let Some(x) = a.max_epochs {
        c.max_epochs = x;
    }
    if let Some(x) = a.patience {
        c.patience = x;
    }
    if let Some(x) = a.dropout {
        c.dropout = x;
    }
    c.validate().map_err(err)?;
    echo_config("classifier", &c);
    Ok(c)
}

fn frozen(a: &VampireArgs) -> Outcome<Option<Arc<FrozenVampire>>> {
    let Some(path) = &a.vampire else {
        if a.vocab.is_some() {
            return Err("--vocab given without --vampire".into());
        }
        return Ok(None);
    };
    let model = VampireModel::load(path).map_err(err)?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| sibling(path, "vocab.txt"));
    let vocab = Vocabulary::read(&vocab_path).map_err(err)?;
    Ok(Some(Arc::new(FrozenVampire::new(model, vocab).map_err(err)?)))
}

fn label_set(paths: &[&Path]) -> Outcome<LabelSet> {
    let records = read_records(paths)?;
    let labels = LabelSet::from_records(&records);
    if labels.len() < 2 {
        return Err(format!("need at least two distinct labels, found {}", labels.len()));
    }
    Ok(labels)
}

fn train(a: TrainArgs, cfg: FileConfig) -> Outcome {
    let config = classifier_config(cfg.classifier, &a.classifier)?;
    let labels = label_set(&[&a.train, &a.val])?;
    let train = labeled_docs(&a.train, &labels)?;
    let val = labeled_docs(&a.val, &labels)?;
    let (mut model, acc) = train_classifier(&train, &val, &config, frozen(&a.features)?).map_err(err)?;
    model.labels = labels.names().to_vec();
    model.save(&a.out).map_err(err)?;
    emit(&json!({"checkpoint": a.out, "val_accuracy": acc, "labels": model.labels}), None)
}

fn selftrain(a: SelftrainArgs, cfg: FileConfig) -> Outcome {
    let config = classifier_config(cfg.classifier, &a.classifier)?;
    let labels = label_set(&[&a.train, &a.val])?;
    let train = labeled_docs(&a.train, &labels)?;
    let val = labeled_docs(&a.val, &labels)?;
    let pool = unlabeled_docs(&a.unlabeled)?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "iterations.jsonl"));
    let mut outcome =
        self_train(&train, &pool, &val, &config, frozen(&a.features)?, Some(&log_path)).map_err(err)?;
    outcome.model.labels = labels.names().to_vec();
    outcome.model.save(&a.out).map_err(err)?;
    emit(
        &json!({
            "checkpoint": a.out,
            "val_accuracy": outcome.model.val_accuracy,
            "best_iteration": outcome.best_iteration,
            "iterations": outcome.log,
            "log": log_path,
        }),
        None,
    )
}

fn evaluate_cmd(a: EvaluateArgs) -> Outcome {
    let model = DanModel::load(&a.model, frozen(&a.features)?).map_err(err)?;
    let labels = if model.labels.is_empty() {
        LabelSet::from_records(&read_records(&[&a.input])?)
    } else {
        LabelSet::from_names(model.labels.clone())
    };
    let docs = labeled_docs(&a.input, &labels)?;
    let report = evaluate(&model, &docs).map_err(err)?;
    emit(&serde_json::to_value(&report).map_err(err)?, a.out.as_deref())
}

fn experiment(a: ExperimentArgs, cfg: FileConfig) -> Outcome {
    let config = classifier_config(cfg.classifier, &a.classifier)?;
    let protocol: Protocol = match &a.protocol {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => cfg.protocol.clone(),
    };
    protocol.validate().map_err(err)?;
    echo_config("protocol", &protocol);
    let labels = label_set(&[&a.pool, &a.val, &a.test])?;
    let pool = labeled_docs(&a.pool, &labels)?;
    let val = labeled_docs(&a.val, &labels)?;
    let test = labeled_docs(&a.test, &labels)?;
    let unlabeled = match &a.unlabeled {
        Some(p) => unlabeled_docs(p)?,
        None => Vec::new(),
    };
    let data = ExperimentData {
        pool: &pool,
        unlabeled: &unlabeled,
        val: &val,
        test: &test,
    };
    let table = run_experiment(&protocol, data, &config, frozen(&a.features)?).map_err(err)?;
    if let Some(p) = &a.csv {
        table.write_csv(p).map_err(err)?;
    }
    emit(&serde_json::to_value(&table).map_err(err)?, a.out.as_deref())
}
