//! Deep averaging network classifier, optionally fed frozen document-model
//! states through a softmax-normalized scalar mix.

mod checkpoint;
mod dan;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{to_counts, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::ops::softmax_in_place;
use crate::numerics::{Parameter, Tensor};
use crate::vampire::VampireModel;

pub use checkpoint::vocab_path;
pub(crate) use dan::argmax;
pub use dan::{
    evaluate, predict_proba, train_classifier, ClassAccuracy, DanBatch, DanCache, DanModel, EvalReport,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DanConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Tokens beyond this many are dropped before averaging.
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for DanConfig {
    fn default() -> Self {
        DanConfig {
            embedding_dim: 50,
            hidden_dim: 128,
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            max_tokens: crate::corpus::MAX_SEQUENCE_TOKENS,
            seed: 0,
        }
    }
}

impl DanConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return fail("embedding and hidden dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.max_tokens == 0 {
            return fail("batch_size, max_epochs, patience and max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Classifier vocabulary: every token seen in training, id 0 for unknowns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIndex {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub const UNK: &str = "@@UNKNOWN@@";

impl TokenIndex {
    /// Sorted distinct tokens of `docs`, after `UNK` at id 0.
    pub fn build(docs: &[Document]) -> Self {
        let mut seen: Vec<&str> = docs.iter().flat_map(|d| d.tokens.iter().map(String::as_str)).collect();
        seen.sort_unstable();
        seen.dedup();
        let mut tokens = vec![UNK.to_string()];
        tokens.extend(seen.into_iter().filter(|t| *t != UNK).map(str::to_string));
        Self::from_tokens(tokens).expect("distinct by construction")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::InvalidInput(format!("classifier vocabulary must start with {UNK}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate classifier token `{t}`")));
            }
        }
        Ok(TokenIndex { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of the first `max_tokens` tokens; unknown tokens map to 0.
    pub fn encode(&self, doc: &Document, max_tokens: usize) -> Vec<u32> {
        doc.tokens
            .iter()
            .take(max_tokens)
            .map(|t| self.index.get(t).copied().unwrap_or(0))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_string).collect()).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Trainable softmax weights over feature sources (θ, then each encoder
/// layer).
#[derive(Clone, Debug)]
pub struct ScalarMix {
    pub logits: Parameter,
}

impl ScalarMix {
    /// +1 for θ and the first encoder layer, −1 for deeper layers.
    pub fn new(sources: usize) -> Self {
        let init: Vec<f64> = (0..sources).map(|s| if s < 2 { 1.0 } else { -1.0 }).collect();
        Self::with_logits(&init)
    }

    pub fn with_logits(logits: &[f64]) -> Self {
        ScalarMix {
            logits: Parameter::new("mix.logits", Tensor::row_vector(logits)),
        }
    }

    pub fn len(&self) -> usize {
        self.logits.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.value.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.logits.value.data().to_vec();
        softmax_in_place(&mut w);
        w
    }

    /// `r = Σ_s w_s · source_s`.
    pub fn mix(&self, sources: &[&[f64]]) -> Result<Vec<f64>> {
        if sources.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "scalar mix has {} weights but got {} sources",
                self.len(),
                sources.len()
            )));
        }
        let dim = sources.first().map_or(0, |s| s.len());
        if let Some(bad) = sources.iter().find(|s| s.len() != dim) {
            return Err(Error::Shape {
                op: "scalar_mix",
                left: (1, dim),
                right: (1, bad.len()),
            });
        }
        let mut r = vec![0.0; dim];
        for (w, s) in self.weights().iter().zip(sources) {
            crate::numerics::tensor::axpy(*w, s, &mut r);
        }
        Ok(r)
    }

    /// Accumulates the logit gradient given `∂L/∂r` for one document.
    pub fn backward(&mut self, sources: &[&[f64]], dr: &[f64]) {
        let w = self.weights();
        let dw: Vec<f64> = sources.iter().map(|s| crate::numerics::tensor::dot(s, dr)).collect();
        let inner: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        for (g, (wi, dwi)) in self.logits.grad.data_mut().iter_mut().zip(w.iter().zip(&dw)) {
            *g += wi * (dwi - inner);
        }
    }
}

/// A frozen document model with the vocabulary it was trained on.
#[derive(Debug)]
pub struct FrozenVampire {
    pub model: VampireModel,
    pub vocab: Vocabulary,
}

/// Per-document feature sources, `[source][K]`.
pub type DocFeatures = Vec<Vec<f64>>;

impl FrozenVampire {
    pub fn new(model: VampireModel, vocab: Vocabulary) -> Result<Self> {
        let hash = vocab.checksum();
        if !model.vocab_hash.is_empty() && model.vocab_hash != hash {
            return Err(Error::InvalidInput(format!(
                "vocabulary checksum {hash} does not match the model's {}",
                model.vocab_hash
            )));
        }
        if vocab.len() != model.vocab_size() {
            return Err(Error::InvalidInput(format!(
                "vocabulary has {} words, model expects {}",
                vocab.len(),
                model.vocab_size()
            )));
        }
        Ok(FrozenVampire { model, vocab })
    }

    pub fn sources(&self) -> usize {
        self.model.encoder.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.model.num_topics()
    }

    /// Eval-mode states for each document, computed in parallel chunks.
    pub fn features(&self, docs: &[Document]) -> Result<Vec<DocFeatures>> {
        let chunks: Vec<Vec<DocFeatures>> = docs
            .par_chunks(256)
            .map(|chunk| {
                let counts: Vec<_> = chunk.iter().map(|d| to_counts(d, &self.vocab).0).collect();
                let refs: Vec<_> = counts.iter().collect();
                let f = self.model.extract_features(&refs)?;
                Ok((0..chunk.len())
                    .map(|i| f.states.sources(i).iter().map(|s| s.to_vec()).collect())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}
