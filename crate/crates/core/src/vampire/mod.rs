//! The variational document model: count encoder, reparameterized latent,
//! topic decoder, ELBO and the pretraining loop.

mod checkpoint;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Activation;

pub use model::{
    kl_divergence, reconstruction_log_prob, reparameterize, sample_latent, ElboTerms, EncoderStates,
    Features, ForwardCache, Noise, VampireModel,
};
pub use train::{pretrain, pretrain_with, EpochRecord, EpochScores, PretrainOptions, TrainingLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlKind {
    Linear,
    Sigmoid,
    Constant,
}

impl std::str::FromStr for KlKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KlKind::Linear),
            "sigmoid" => Ok(KlKind::Sigmoid),
            "constant" => Ok(KlKind::Constant),
            other => Err(Error::Config(format!("unknown KL schedule `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlSchedule {
    pub kind: KlKind,
    pub linear_scale: u64,
    pub sigmoid_w1: f64,
    pub sigmoid_w2: f64,
}

impl Default for KlSchedule {
    fn default() -> Self {
        KlSchedule {
            kind: KlKind::Linear,
            linear_scale: 1000,
            sigmoid_w1: 0.25,
            sigmoid_w2: 15.0,
        }
    }
}

impl KlSchedule {
    pub fn constant() -> Self {
        KlSchedule {
            kind: KlKind::Constant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.linear_scale == 0 {
            return Err(Error::Config("KL linear scale must be positive".into()));
        }
        if !(self.sigmoid_w1.is_finite() && self.sigmoid_w1 >= 0.0 && self.sigmoid_w2.is_finite()) {
            return Err(Error::Config(
                "KL sigmoid weights must be finite with a non-negative slope".into(),
            ));
        }
        Ok(())
    }

    /// The clock the schedule reads: the global batch counter for the linear
    /// ramp, the epoch index for the sigmoid.
    pub fn clock(&self, step: u64, epoch: u64) -> f64 {
        match self.kind {
            KlKind::Sigmoid => epoch as f64,
            _ => step as f64,
        }
    }

    pub fn weight_at(&self, step: u64, epoch: u64) -> f64 {
        kl_weight(self, self.clock(step, epoch))
    }
}

/// Weight on the KL term at time `t ≥ 0`; always in `[0, 1]` and
/// non-decreasing in `t`.
pub fn kl_weight(schedule: &KlSchedule, t: f64) -> f64 {
    match schedule.kind {
        KlKind::Linear => (t / schedule.linear_scale as f64).clamp(0.0, 1.0),
        KlKind::Sigmoid => 1.0 / (1.0 + (-schedule.sigmoid_w1 * (t - schedule.sigmoid_w2)).exp()),
        KlKind::Constant => 1.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoppingCriterion {
    Npmi,
    Nll,
}

impl StoppingCriterion {
    /// Whether `candidate` is strictly better than `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            StoppingCriterion::Npmi => candidate > incumbent,
            StoppingCriterion::Nll => candidate < incumbent,
        }
    }
}

impl std::str::FromStr for StoppingCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npmi" => Ok(StoppingCriterion::Npmi),
            "nll" => Ok(StoppingCriterion::Nll),
            other => Err(Error::Config(format!("unknown stopping criterion `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VampireConfig {
    /// Width of every encoder layer and the number of topics K.
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub encoder_activation: Activation,
    pub z_dropout: f64,
    pub kl_schedule: KlSchedule,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub update_background: bool,
    /// Vocabulary size limit used when building the model's vocabulary.
    pub vocab_size: usize,
    pub stopping_criterion: StoppingCriterion,
    /// Batch normalization on the decoder logits.
    pub batchnorm: bool,
    pub seed: u64,
}

impl Default for VampireConfig {
    fn default() -> Self {
        VampireConfig {
            hidden_dim: 64,
            encoder_layers: 2,
            encoder_activation: Activation::Tanh,
            z_dropout: 0.0,
            kl_schedule: KlSchedule::default(),
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            update_background: false,
            vocab_size: 30_000,
            stopping_criterion: StoppingCriterion::Npmi,
            batchnorm: true,
            seed: 0,
        }
    }
}

impl VampireConfig {
    /// Best published assignment for the movie-review corpus.
    pub fn imdb() -> Self {
        VampireConfig {
            hidden_dim: 80,
            encoder_layers: 2,
            encoder_activation: Activation::Tanh,
            z_dropout: 0.47,
            kl_schedule: KlSchedule::default(),
            learning_rate: 0.00081,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            update_background: false,
            vocab_size: 30_000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be positive".into());
        }
        if !(1..=3).contains(&self.encoder_layers) {
            return fail(format!("encoder_layers must be 1, 2 or 3, got {}", self.encoder_layers));
        }
        if self.encoder_activation == Activation::Linear {
            return fail("encoder activation must be relu, tanh or softplus".into());
        }
        if !(0.0..=0.5).contains(&self.z_dropout) {
            return fail(format!("z_dropout {} outside [0, 0.5]", self.z_dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2".into());
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return fail("max_epochs and patience must be positive".into());
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive".into());
        }
        self.kl_schedule.validate()
    }
}
