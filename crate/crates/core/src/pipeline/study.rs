use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_and_std, sample_config, SearchSpace};
use crate::classifier::{train_classifier, DanConfig, FrozenVampire};
use crate::coherence::{npmi_global, CooccurrenceStats};
use crate::corpus::{CountVector, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::rng::mix_seed;
use crate::numerics::Rng;
use crate::vampire::{pretrain, PretrainOptions, StoppingCriterion};

#[derive(Clone, Debug)]
pub struct StudyOptions {
    /// Pretraining runs per criterion.
    pub trials_per_criterion: usize,
    pub master_seed: u64,
    pub space: SearchSpace,
    pub dan: DanConfig,
    pub parallelism: usize,
    /// JSON-lines, one record per trial.
    pub log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub trial: usize,
    pub criterion: StoppingCriterion,
    pub seed: u64,
    pub best_epoch: usize,
    pub npmi: f64,
    pub val_nll: f64,
    pub downstream_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub records: Vec<StudyRecord>,
    pub npmi_selected_acc_variance: f64,
    pub nll_selected_acc_variance: f64,
    /// Rank correlations over all trials; `None` when one side is constant.
    pub npmi_vs_acc: Option<f64>,
    pub nll_vs_acc: Option<f64>,
    pub npmi_vs_nll: Option<f64>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// 1-based ranks, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&ranks(xs), &ranks(ys))
}

/// Pretrains `trials_per_criterion` sampled configs under each stopping
/// criterion (trial i uses the same config and seed under both), then
/// trains a classifier on `labeled` with each frozen model and records its
/// accuracy on `dan_val`.
pub fn stopping_study(
    train: &[CountVector],
    validation: &[CountVector],
    vocab: &Vocabulary,
    labeled: &[Document],
    dan_val: &[Document],
    options: &StudyOptions,
) -> Result<StudyReport> {
    let n = options.trials_per_criterion;
    if n == 0 {
        return Err(Error::Config("the study needs at least one trial per criterion".into()));
    }
    let stats = CooccurrenceStats::from_counts(validation, vocab.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let run = |trial: usize| -> Result<StudyRecord> {
        let criterion = if trial < n {
            StoppingCriterion::Npmi
        } else {
            StoppingCriterion::Nll
        };
        let seed = mix_seed(options.master_seed, (trial % n) as u64);
        let mut config = sample_config(&options.space, &mut Rng::new(seed))?;
        config.seed = seed;
        config.stopping_criterion = criterion;
        let (model, log) = pretrain(train, validation, vocab, &config, &PretrainOptions::default())?;
        let npmi = npmi_global(&model, &stats)?;
        let val_nll = model.negative_log_likelihood(validation)?;
        let frozen = Arc::new(FrozenVampire::new(model, vocab.clone())?);
        let (_, downstream_acc) = train_classifier(labeled, dan_val, &options.dan, Some(frozen))?;
        log::info!("study trial {trial} ({criterion:?}): npmi {npmi:.4} nll {val_nll:.3} acc {downstream_acc:.4}");
        Ok(StudyRecord {
            trial,
            criterion,
            seed,
            best_epoch: log.best_epoch,
            npmi,
            val_nll,
            downstream_acc,
        })
    };
    let records: Vec<StudyRecord> = pool.install(|| (0..2 * n).into_par_iter().map(run).collect::<Result<_>>())?;

    if let Some(path) = &options.log {
        let mut out = Vec::new();
        for r in &records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    }
    let accs = |c: StoppingCriterion| -> Vec<f64> {
        records.iter().filter(|r| r.criterion == c).map(|r| r.downstream_acc).collect()
    };
    let variance = |xs: Vec<f64>| mean_and_std(&xs).1.powi(2);
    let col = |f: fn(&StudyRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let (npmi, nll, acc) = (col(|r| r.npmi), col(|r| r.val_nll), col(|r| r.downstream_acc));
    Ok(StudyReport {
        npmi_selected_acc_variance: variance(accs(StoppingCriterion::Npmi)),
        nll_selected_acc_variance: variance(accs(StoppingCriterion::Nll)),
        npmi_vs_acc: spearman(&npmi, &acc),
        nll_vs_acc: spearman(&nll, &acc),
        npmi_vs_nll: spearman(&npmi, &nll),
        records,
    })
}
