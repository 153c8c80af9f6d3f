//! Random hyperparameter search, multi-seed experiments over label budgets,
//! and the stopping-criterion study.

mod experiment;
mod search;
mod study;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Rng};
use crate::vampire::{KlKind, KlSchedule, StoppingCriterion, VampireConfig};

pub use experiment::{
    mean_and_std, run_experiment, run_experiment_with, Cell, ExperimentData, ExperimentTable, Method, Protocol,
};
pub use search::{run_search, run_search_with, SearchOptions, SearchOutcome, TrialOutcome, TrialResult};
pub use study::{pearson, spearman, stopping_study, StudyOptions, StudyRecord, StudyReport};

/// A distribution over one hyperparameter. Numeric variants apply only to
/// numeric fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist<T> {
    Fixed(T),
    Choice(Vec<T>),
    /// Inclusive of both bounds.
    UniformInt { lo: i64, hi: i64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

/// Values a [`Dist`] can produce from its numeric variants.
pub trait Sampled: Clone {
    fn from_int(_: i64) -> Option<Self> {
        None
    }
    fn from_float(_: f64) -> Option<Self> {
        None
    }
}

impl Sampled for usize {
    fn from_int(v: i64) -> Option<Self> {
        usize::try_from(v).ok()
    }
}

impl Sampled for u64 {
    fn from_int(v: i64) -> Option<Self> {
        u64::try_from(v).ok()
    }
}

impl Sampled for f64 {
    fn from_int(v: i64) -> Option<Self> {
        Some(v as f64)
    }
    fn from_float(v: f64) -> Option<Self> {
        Some(v)
    }
}

impl Sampled for bool {}
impl Sampled for KlKind {}
impl Sampled for Activation {}

impl<T: Sampled> Dist<T> {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("search space `{name}`: {m}")));
        match self {
            Dist::Fixed(_) => Ok(()),
            Dist::Choice(v) if v.is_empty() => bad("empty choice list".into()),
            Dist::Choice(_) => Ok(()),
            Dist::UniformInt { lo, hi } => {
                if lo > hi {
                    return bad(format!("lo {lo} > hi {hi}"));
                }
                if T::from_int(*lo).is_none() || T::from_int(*hi).is_none() {
                    return bad("integer range not valid for this field".into());
                }
                Ok(())
            }
            Dist::Uniform { lo, hi } | Dist::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return bad(format!("bounds [{lo}, {hi}] invalid"));
                }
                if matches!(self, Dist::LogUniform { .. }) && *lo <= 0.0 {
                    return bad("log-uniform bounds must be positive".into());
                }
                if T::from_float(*lo).is_none() {
                    return bad("real-valued range not valid for this field".into());
                }
                Ok(())
            }
        }
    }

    /// Assumes `validate` passed.
    pub fn sample(&self, rng: &mut Rng) -> T {
        match self {
            Dist::Fixed(v) => v.clone(),
            Dist::Choice(v) => v[rng.below(v.len() as u64) as usize].clone(),
            Dist::UniformInt { lo, hi } => {
                let span = (hi - lo) as u64 + 1;
                T::from_int(lo + rng.below(span) as i64).expect("validated")
            }
            Dist::Uniform { lo, hi } => T::from_float(rng.uniform_range(*lo, *hi)).expect("validated"),
            Dist::LogUniform { lo, hi } => {
                T::from_float(rng.uniform_range(lo.ln(), hi.ln()).exp().clamp(*lo, *hi)).expect("validated")
            }
        }
    }
}

/// Pretraining hyperparameter distributions. Defaults are the standard
/// search space; the stopping criterion is chosen per search, not sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub max_epochs: Dist<usize>,
    pub patience: Dist<usize>,
    pub batch_size: Dist<usize>,
    pub kl_annealing: Dist<KlKind>,
    pub sigmoid_weight_1: Dist<f64>,
    pub sigmoid_weight_2: Dist<f64>,
    pub linear_scaling: Dist<u64>,
    pub hidden_dim: Dist<usize>,
    pub encoder_layers: Dist<usize>,
    pub encoder_activation: Dist<Activation>,
    pub z_dropout: Dist<f64>,
    pub learning_rate: Dist<f64>,
    pub update_background: Dist<bool>,
    pub vocab_size: Dist<usize>,
    pub batchnorm: Dist<bool>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            max_epochs: Dist::Fixed(50),
            patience: Dist::Fixed(5),
            batch_size: Dist::Fixed(64),
            kl_annealing: Dist::Choice(vec![KlKind::Sigmoid, KlKind::Linear, KlKind::Constant]),
            sigmoid_weight_1: Dist::Fixed(0.25),
            sigmoid_weight_2: Dist::Fixed(15.0),
            linear_scaling: Dist::Fixed(1000),
            hidden_dim: Dist::UniformInt { lo: 32, hi: 128 },
            encoder_layers: Dist::Choice(vec![1, 2, 3]),
            encoder_activation: Dist::Choice(vec![Activation::Relu, Activation::Tanh, Activation::Softplus]),
            z_dropout: Dist::Uniform { lo: 0.0, hi: 0.5 },
            learning_rate: Dist::LogUniform { lo: 1e-4, hi: 1e-2 },
            update_background: Dist::Choice(vec![true, false]),
            vocab_size: Dist::Fixed(30000),
            batchnorm: Dist::Fixed(true),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.max_epochs.validate("max_epochs")?;
        self.patience.validate("patience")?;
        self.batch_size.validate("batch_size")?;
        self.kl_annealing.validate("kl_annealing")?;
        self.sigmoid_weight_1.validate("sigmoid_weight_1")?;
        self.sigmoid_weight_2.validate("sigmoid_weight_2")?;
        self.linear_scaling.validate("linear_scaling")?;
        self.hidden_dim.validate("hidden_dim")?;
        self.encoder_layers.validate("encoder_layers")?;
        self.encoder_activation.validate("encoder_activation")?;
        self.z_dropout.validate("z_dropout")?;
        self.learning_rate.validate("learning_rate")?;
        self.update_background.validate("update_background")?;
        self.vocab_size.validate("vocab_size")?;
        self.batchnorm.validate("batchnorm")
    }
}

/// Draws every field in a fixed order; `seed` and the stopping criterion are
/// left for the caller.
pub fn sample_config(space: &SearchSpace, rng: &mut Rng) -> Result<VampireConfig> {
    space.validate()?;
    let config = VampireConfig {
        max_epochs: space.max_epochs.sample(rng),
        patience: space.patience.sample(rng),
        batch_size: space.batch_size.sample(rng),
        kl_schedule: KlSchedule {
            kind: space.kl_annealing.sample(rng),
            sigmoid_w1: space.sigmoid_weight_1.sample(rng),
            sigmoid_w2: space.sigmoid_weight_2.sample(rng),
            linear_scale: space.linear_scaling.sample(rng),
        },
        hidden_dim: space.hidden_dim.sample(rng),
        encoder_layers: space.encoder_layers.sample(rng),
        encoder_activation: space.encoder_activation.sample(rng),
        z_dropout: space.z_dropout.sample(rng),
        learning_rate: space.learning_rate.sample(rng),
        update_background: space.update_background.sample(rng),
        vocab_size: space.vocab_size.sample(rng),
        batchnorm: space.batchnorm.sample(rng),
        stopping_criterion: StoppingCriterion::Npmi,
        seed: 0,
    };
    config.validate()?;
    Ok(config)
}
