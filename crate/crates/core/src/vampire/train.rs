use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{StoppingCriterion, VampireConfig, VampireModel};
use crate::coherence::{npmi_global, CooccurrenceStats};
use crate::corpus::{CountVector, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::{Adam, Rng};

#[derive(Clone, Debug, Default)]
pub struct PretrainOptions {
    /// Best checkpoint so far, rewritten on every improvement.
    pub checkpoint: Option<PathBuf>,
    /// JSON-lines epoch log.
    pub log: Option<PathBuf>,
}

/// End-of-epoch scores on the validation split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochScores {
    pub npmi: Option<f64>,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Global batch counter at the end of the epoch.
    pub steps: u64,
    /// Batch-mean bound, averaged over the epoch's batches.
    pub elbo: f64,
    pub reconstruction: f64,
    pub kl: f64,
    /// Weight used on the epoch's last batch.
    pub kl_weight: f64,
    pub npmi: Option<f64>,
    pub val_nll: Option<f64>,
    pub criterion: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Pretrains with both NPMI (against the validation documents) and
/// validation NLL computed every epoch; the config picks which one stops.
pub fn pretrain(
    train: &[CountVector],
    validation: &[CountVector],
    vocab: &Vocabulary,
    config: &VampireConfig,
    options: &PretrainOptions,
) -> Result<(VampireModel, TrainingLog)> {
    let stats = CooccurrenceStats::from_counts(validation, vocab.len())?;
    pretrain_with(train, vocab, config, options, |m| {
        Ok(EpochScores {
            npmi: Some(npmi_global(m, &stats)?),
            val_nll: Some(m.negative_log_likelihood(validation)?),
        })
    })
}

/// The training loop with a caller-supplied end-of-epoch evaluation.
pub fn pretrain_with(
    train: &[CountVector],
    vocab: &Vocabulary,
    config: &VampireConfig,
    options: &PretrainOptions,
    mut evaluate: impl FnMut(&VampireModel) -> Result<EpochScores>,
) -> Result<(VampireModel, TrainingLog)> {
    config.validate()?;
    let usable: Vec<&CountVector> = train.iter().filter(|c| !c.is_degenerate()).collect();
    if usable.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pretraining needs at least 2 non-empty documents, got {}",
            usable.len()
        )));
    }
    let owned: Vec<CountVector> = usable.iter().map(|c| (*c).clone()).collect();
    let background = VampireModel::background_from_counts(&owned, vocab.len());
    let mut model = VampireModel::new(config.clone(), &background, vocab.checksum())?;
    let adam = Adam::new(config.learning_rate);
    let mut rng = Rng::new(config.seed).derive(0x7a11);

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, VampireModel)> = None;
    let mut stale = 0;
    let mut step: u64 = 0;
    let mut order: Vec<usize> = (0..usable.len()).collect();

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let batches = batch_ranges(order.len(), config.batch_size);
        let (mut elbo, mut recon, mut kl, mut weight) = (0.0, 0.0, 0.0, 0.0);
        for (b, range) in batches.iter().enumerate() {
            let docs: Vec<&CountVector> = order[range.clone()].iter().map(|&i| usable[i]).collect();
            let x = model.batch(&docs)?;
            weight = config.kl_schedule.weight_at(step, epoch as u64);
            let terms = model
                .train_step(&x, weight, &adam, &mut rng)
                .map_err(|e| match e {
                    Error::InvalidInput(detail) | Error::NonFiniteGradient(detail) => Error::Divergence {
                        epoch: epoch + 1,
                        batch: b,
                        detail,
                    },
                    other => other,
                })?;
            step += 1;
            elbo += terms.objective;
            recon += terms.reconstruction;
            kl += terms.kl;
        }
        let nb = batches.len() as f64;

        let scores = evaluate(&model)?;
        let criterion = match config.stopping_criterion {
            StoppingCriterion::Npmi => scores.npmi,
            StoppingCriterion::Nll => scores.val_nll,
        }
        .ok_or_else(|| Error::InvalidInput("stopping criterion was not evaluated".into()))?;
        let improved = best
            .as_ref()
            .is_none_or(|(incumbent, _)| config.stopping_criterion.improves(criterion, *incumbent));
        let record = EpochRecord {
            epoch: epoch + 1,
            steps: step,
            elbo: elbo / nb,
            reconstruction: recon / nb,
            kl: kl / nb,
            kl_weight: weight,
            npmi: scores.npmi,
            val_nll: scores.val_nll,
            criterion,
            improved,
        };
        log::info!(
            "epoch {} elbo {:.4} kl {:.4} kl_weight {:.3} npmi {:?} val_nll {:?}",
            record.epoch,
            record.elbo,
            record.kl,
            record.kl_weight,
            record.npmi,
            record.val_nll
        );
        if let Some(path) = &options.log {
            append_jsonl(path, &record, epoch == 0)?;
        }
        log.records.push(record);

        if improved {
            stale = 0;
            model.criterion_value = Some(criterion);
            model.epoch = epoch + 1;
            if let Some(path) = &options.checkpoint {
                model.save(path)?;
            }
            best = Some((criterion, model.clone()));
            log.best_epoch = epoch + 1;
        } else {
            stale += 1;
            if stale >= config.patience {
                log.stopped_early = epoch + 1 < config.max_epochs;
                break;
            }
        }
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok((best, log))
}

/// Consecutive batch ranges; a tail shorter than 2 joins the previous batch.
fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < 2) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().end = tail.end;
    }
    out
}

fn append_jsonl(path: &Path, record: &EpochRecord, truncate: bool) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!truncate)
        .truncate(truncate)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    (&file).write_all(&line).map_err(|e| Error::io(path, e))
}
