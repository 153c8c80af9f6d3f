use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_config, SearchSpace};
use crate::corpus::{CountVector, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::rng::mix_seed;
use crate::numerics::Rng;
use crate::vampire::{pretrain, PretrainOptions, StoppingCriterion, VampireConfig};

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub n_trials: usize,
    /// Trials run concurrently, at most this many.
    pub parallelism: usize,
    pub master_seed: u64,
    pub criterion: StoppingCriterion,
    /// Per-trial checkpoints and logs, `trials.jsonl` and `summary.json`.
    pub out_dir: Option<PathBuf>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_trials: 60,
            parallelism: 1,
            master_seed: 0,
            criterion: StoppingCriterion::Npmi,
            out_dir: None,
        }
    }
}

/// What a finished trial reports back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub criterion_value: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: usize,
    pub seed: u64,
    pub config: VampireConfig,
    pub criterion: StoppingCriterion,
    pub criterion_value: Option<f64>,
    pub best_epoch: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub seconds: f64,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrialResult,
    /// Every trial in id order.
    pub trials: Vec<TrialResult>,
}

fn trial_checkpoint(out_dir: Option<&Path>, id: usize) -> Option<PathBuf> {
    out_dir.map(|d| d.join(format!("trial_{id:03}.vam")))
}

/// Random search with pretraining on `train`, scored on `validation`.
pub fn run_search(
    space: &SearchSpace,
    train: &[CountVector],
    validation: &[CountVector],
    vocab: &Vocabulary,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    run_search_with(space, options, |_, config, checkpoint| {
        let opts = PretrainOptions {
            checkpoint: checkpoint.map(Path::to_path_buf),
            log: checkpoint.map(|p| p.with_extension("jsonl")),
        };
        let (model, log) = pretrain(train, validation, vocab, config, &opts)?;
        let criterion_value = model
            .criterion_value
            .ok_or_else(|| Error::InvalidInput("trial produced no criterion value".into()))?;
        Ok(TrialOutcome {
            criterion_value,
            best_epoch: log.best_epoch,
        })
    })
}

/// Runs `n_trials` sampled configs through `runner` on a pool of
/// `parallelism` threads. Trial `i` samples its config from, and trains
/// with, the seed `mix_seed(master_seed, i)`, so the table does not depend
/// on scheduling.
pub fn run_search_with<F>(space: &SearchSpace, options: &SearchOptions, runner: F) -> Result<SearchOutcome>
where
    F: Fn(usize, &VampireConfig, Option<&Path>) -> Result<TrialOutcome> + Sync,
{
    space.validate()?;
    if options.n_trials == 0 {
        return Err(Error::Config("a search needs at least one trial".into()));
    }
    if options.parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let out_dir = options.out_dir.as_deref();
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;

    let run_one = |id: usize| -> Result<TrialResult> {
        let seed = mix_seed(options.master_seed, id as u64);
        let mut config = sample_config(space, &mut Rng::new(seed))?;
        config.seed = seed;
        config.stopping_criterion = options.criterion;
        let checkpoint = trial_checkpoint(out_dir, id);
        let start = Instant::now();
        let outcome = runner(id, &config, checkpoint.as_deref());
        let seconds = start.elapsed().as_secs_f64();
        let mut result = TrialResult {
            trial_id: id,
            seed,
            config,
            criterion: options.criterion,
            criterion_value: None,
            best_epoch: None,
            checkpoint: None,
            seconds,
            failed: true,
            error: None,
        };
        match outcome {
            Ok(o) if o.criterion_value.is_finite() => {
                result.criterion_value = Some(o.criterion_value);
                result.best_epoch = Some(o.best_epoch);
                result.checkpoint = checkpoint;
                result.failed = false;
                log::info!("trial {id}: criterion {:.5}", o.criterion_value);
            }
            Ok(o) => result.error = Some(format!("non-finite criterion value {}", o.criterion_value)),
            Err(e) => {
                log::warn!("trial {id} failed: {e}");
                result.error = Some(e.to_string());
            }
        }
        Ok(result)
    };
    let trials: Vec<TrialResult> =
        pool.install(|| (0..options.n_trials).into_par_iter().map(run_one).collect::<Result<_>>())?;

    let mut best: Option<&TrialResult> = None;
    for t in trials.iter().filter(|t| !t.failed) {
        let v = t.criterion_value.expect("completed trials carry a value");
        if best.is_none_or(|b| options.criterion.improves(v, b.criterion_value.unwrap())) {
            best = Some(t);
        }
    }
    let best = best
        .cloned()
        .ok_or_else(|| Error::InvalidInput(format!("all {} trials failed", trials.len())))?;
    let outcome = SearchOutcome { best, trials };
    if let Some(d) = out_dir {
        let mut lines = Vec::new();
        for t in &outcome.trials {
            serde_json::to_writer(&mut lines, t)?;
            lines.push(b'\n');
        }
        let path = d.join("trials.jsonl");
        std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        let summary = serde_json::json!({
            "best": outcome.best,
            "n_trials": outcome.trials.len(),
            "n_failed": outcome.trials.iter().filter(|t| t.failed).count(),
        });
        let path = d.join("summary.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn without_timing(o: &SearchOutcome) -> Vec<TrialResult> {
        o.trials
            .iter()
            .map(|t| TrialResult {
                seconds: 0.0,
                ..t.clone()
            })
            .collect()
    }

    #[test]
    fn argmax_under_npmi_and_argmin_under_nll() {
        let values = [0.1, 0.3, 0.2];
        let runner = |id: usize, _: &VampireConfig, _: Option<&Path>| {
            Ok(TrialOutcome {
                criterion_value: values[id],
                best_epoch: 1,
            })
        };
        let mut opts = SearchOptions {
            n_trials: 3,
            ..Default::default()
        };
        let o = run_search_with(&SearchSpace::default(), &opts, runner).unwrap();
        assert_eq!(o.best.trial_id, 1);
        opts.criterion = StoppingCriterion::Nll;
        let o = run_search_with(&SearchSpace::default(), &opts, runner).unwrap();
        assert_eq!(o.best.trial_id, 0);
    }

    #[test]
    fn single_trial_is_best() {
        let opts = SearchOptions {
            n_trials: 1,
            ..Default::default()
        };
        let o = run_search_with(&SearchSpace::default(), &opts, |_, _, _| {
            Ok(TrialOutcome {
                criterion_value: -0.4,
                best_epoch: 3,
            })
        })
        .unwrap();
        assert_eq!(o.best.trial_id, 0);
        assert_eq!(o.trials.len(), 1);
    }

    #[test]
    fn failures_are_flagged_and_skipped() {
        let opts = SearchOptions {
            n_trials: 4,
            ..Default::default()
        };
        let o = run_search_with(&SearchSpace::default(), &opts, |id, _, _| match id {
            0 => Err(Error::Divergence {
                epoch: 1,
                batch: 0,
                detail: "nan".into(),
            }),
            1 => Ok(TrialOutcome {
                criterion_value: f64::NAN,
                best_epoch: 1,
            }),
            _ => Ok(TrialOutcome {
                criterion_value: id as f64,
                best_epoch: 1,
            }),
        })
        .unwrap();
        assert!(o.trials[0].failed && o.trials[1].failed);
        assert!(o.trials[0].error.is_some());
        assert_eq!(o.best.trial_id, 3);
        let all_fail = run_search_with(&SearchSpace::default(), &opts, |_, _, _| {
            Err(Error::InvalidInput("boom".into()))
        });
        assert!(all_fail.is_err());
    }

    #[test]
    fn table_independent_of_parallelism() {
        let runner = |_: usize, c: &VampireConfig, _: Option<&Path>| {
            Ok(TrialOutcome {
                criterion_value: c.learning_rate * c.hidden_dim as f64,
                best_epoch: c.encoder_layers,
            })
        };
        let mut opts = SearchOptions {
            n_trials: 12,
            master_seed: 99,
            ..Default::default()
        };
        let one = run_search_with(&SearchSpace::default(), &opts, runner).unwrap();
        opts.parallelism = 4;
        let four = run_search_with(&SearchSpace::default(), &opts, runner).unwrap();
        assert_eq!(without_timing(&one), without_timing(&four));
        let seeds: std::collections::HashSet<u64> = one.trials.iter().map(|t| t.seed).collect();
        assert_eq!(seeds.len(), 12);
    }

    #[test]
    fn writes_trial_table() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SearchOptions {
            n_trials: 2,
            out_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        run_search_with(&SearchSpace::default(), &opts, |id, _, p| {
            assert!(p.unwrap().ends_with(format!("trial_{id:03}.vam")));
            Ok(TrialOutcome {
                criterion_value: 0.5,
                best_epoch: 1,
            })
        })
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("trials.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
        let summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["n_failed"], 0);
    }
}
