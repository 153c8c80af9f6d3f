use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DanConfig, DocFeatures, FrozenVampire, ScalarMix, TokenIndex};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::numerics::dropout::{dropout_backward, dropout_mask};
use crate::numerics::ops::{activate, activate_backward, log_softmax_in_place};
use crate::numerics::tensor::axpy;
use crate::numerics::{Activation, Adam, HasParameters, Linear, Parameter, Rng, Tensor};

#[derive(Clone, Debug)]
pub struct DanModel {
    pub config: DanConfig,
    pub tokens: TokenIndex,
    /// `[classifier vocabulary × embedding_dim]`, row 0 for unknown tokens.
    pub embeddings: Parameter,
    pub mix: Option<ScalarMix>,
    pub hidden: Linear,
    pub output: Linear,
    pub num_classes: usize,
    /// Class names by id, when known.
    pub labels: Vec<String>,
    pub vampire: Option<Arc<FrozenVampire>>,
    pub val_accuracy: f64,
}

/// One minibatch in encoded form. `features` is empty without a document
/// model.
#[derive(Clone, Debug)]
pub struct DanBatch<'a> {
    pub tokens: Vec<&'a [u32]>,
    pub features: Vec<&'a DocFeatures>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DanCache {
    input: Tensor,
    pre: Tensor,
    act: Tensor,
    mask: Option<Tensor>,
    dropped: Tensor,
    log_probs: Tensor,
}

impl DanCache {
    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub n: usize,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    pub per_class_accuracy: Vec<ClassAccuracy>,
    pub seed: u64,
}

/// Lowest id among the maxima.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl DanModel {
    pub fn new(
        config: DanConfig,
        tokens: TokenIndex,
        num_classes: usize,
        vampire: Option<Arc<FrozenVampire>>,
    ) -> Result<Self> {
        config.validate()?;
        if num_classes < 2 {
            return Err(Error::InvalidInput("a classifier needs at least two classes".into()));
        }
        let mut rng = Rng::new(config.seed).derive(0xda);
        let d = config.embedding_dim;
        let mut emb = Tensor::zeros(tokens.len(), d);
        for x in emb.data_mut() {
            *x = rng.uniform_range(-0.05, 0.05);
        }
        let (mix, feature_dim) = match &vampire {
            Some(v) => (Some(ScalarMix::new(v.sources())), v.dim()),
            None => (None, 0),
        };
        let hidden = Linear::glorot("hidden", feature_dim + d, config.hidden_dim, &mut rng);
        let output = Linear::glorot("output", config.hidden_dim, num_classes, &mut rng);
        Ok(DanModel {
            config,
            tokens,
            embeddings: Parameter::new("embeddings", emb),
            mix,
            hidden,
            output,
            num_classes,
            labels: Vec::new(),
            vampire,
            val_accuracy: 0.0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.in_dim() - self.config.embedding_dim
    }

    pub fn encode(&self, docs: &[Document]) -> Vec<Vec<u32>> {
        docs.iter().map(|d| self.tokens.encode(d, self.config.max_tokens)).collect()
    }

    pub fn doc_features(&self, docs: &[Document]) -> Result<Vec<DocFeatures>> {
        match &self.vampire {
            Some(v) => v.features(docs),
            None => Ok(Vec::new()),
        }
    }

    /// `[r ; mean embedding]` rows; an empty token list averages to zero.
    fn inputs(&self, batch: &DanBatch) -> Result<Tensor> {
        let d = self.config.embedding_dim;
        let k = self.feature_dim();
        let mut input = Tensor::zeros(batch.tokens.len(), k + d);
        for (i, ids) in batch.tokens.iter().enumerate() {
            let row = input.row_mut(i);
            if let Some(mix) = &self.mix {
                let srcs: Vec<&[f64]> = batch
                    .features
                    .get(i)
                    .ok_or_else(|| Error::InvalidInput("missing document-model features".into()))?
                    .iter()
                    .map(|s| s.as_slice())
                    .collect();
                row[..k].copy_from_slice(&mix.mix(&srcs)?);
            }
            if !ids.is_empty() {
                let scale = 1.0 / ids.len() as f64;
                for &t in ids.iter() {
                    axpy(scale, self.embeddings.value.row(t as usize), &mut row[k..]);
                }
            }
        }
        Ok(input)
    }

    /// Log class probabilities and, when labels are present, the mean
    /// cross-entropy.
    pub fn forward(&self, batch: &DanBatch, mask: Option<&Tensor>) -> Result<(f64, DanCache)> {
        let input = self.inputs(batch)?;
        let pre = self.hidden.forward(&input)?;
        let act = activate(&pre, Activation::Relu);
        let dropped = match mask {
            Some(m) => act.hadamard(m)?,
            None => act.clone(),
        };
        let mut log_probs = self.output.forward(&dropped)?;
        for r in 0..log_probs.rows() {
            log_softmax_in_place(log_probs.row_mut(r));
        }
        let loss = if batch.labels.is_empty() {
            0.0
        } else {
            -batch
                .labels
                .iter()
                .enumerate()
                .map(|(i, &y)| log_probs.get(i, y))
                .sum::<f64>()
                / batch.labels.len() as f64
        };
        Ok((
            loss,
            DanCache {
                input,
                pre,
                act,
                mask: mask.cloned(),
                dropped,
                log_probs,
            },
        ))
    }

    pub fn backward(&mut self, batch: &DanBatch, cache: &DanCache) -> Result<()> {
        let n = batch.labels.len() as f64;
        let mut d = cache.log_probs.map(f64::exp);
        for (i, &y) in batch.labels.iter().enumerate() {
            let row = d.row_mut(i);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        let d_dropped = self.output.backward(&cache.dropped, &d)?;
        let d_act = dropout_backward(cache.mask.as_ref(), &d_dropped)?;
        let d_pre = activate_backward(&cache.pre, &cache.act, Activation::Relu, &d_act)?;
        let d_input = self.hidden.backward(&cache.input, &d_pre)?;
        let k = self.feature_dim();
        for (i, ids) in batch.tokens.iter().enumerate() {
            let row = d_input.row(i);
            if let Some(mix) = &mut self.mix {
                let srcs: Vec<&[f64]> = batch.features[i].iter().map(|s| s.as_slice()).collect();
                mix.backward(&srcs, &row[..k]);
            }
            if !ids.is_empty() {
                let scale = 1.0 / ids.len() as f64;
                for &t in ids.iter() {
                    axpy(scale, &row[k..], self.embeddings.grad.row_mut(t as usize));
                }
            }
        }
        Ok(())
    }

    /// Eval-mode class probabilities for already encoded documents.
    pub fn probabilities(&self, tokens: &[Vec<u32>], features: &[DocFeatures]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..tokens.len())
            .collect::<Vec<_>>()
            .par_chunks(256)
            .map(|idx| {
                let batch = DanBatch {
                    tokens: idx.iter().map(|&i| tokens[i].as_slice()).collect(),
                    features: if features.is_empty() {
                        Vec::new()
                    } else {
                        idx.iter().map(|&i| &features[i]).collect()
                    },
                    labels: Vec::new(),
                };
                let (_, cache) = self.forward(&batch, None)?;
                Ok(cache.log_probs.rows_iter().map(|r| r.iter().map(|v| v.exp()).collect()).collect::<Vec<Vec<f64>>>())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if rows.is_empty() {
            return Ok(Tensor::zeros(0, self.num_classes));
        }
        Tensor::from_rows(&rows)
    }

    fn class_name(&self, c: usize) -> String {
        self.labels.get(c).cloned().unwrap_or_else(|| c.to_string())
    }
}

impl HasParameters for DanModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.embeddings];
        if let Some(m) = &self.mix {
            out.push(&m.logits);
        }
        out.extend([&self.hidden.weight, &self.hidden.bias, &self.output.weight, &self.output.bias]);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.embeddings];
        if let Some(m) = &mut self.mix {
            out.push(&mut m.logits);
        }
        out.extend([
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]);
        out
    }
}

fn labels_of(docs: &[Document], what: &str) -> Result<Vec<usize>> {
    docs.iter()
        .map(|d| {
            d.label
                .ok_or_else(|| Error::InvalidInput(format!("{what} document `{}` has no label", d.id)))
        })
        .collect()
}

fn accuracy(probs: &Tensor, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(probs.row(*i)) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Minibatch Adam on cross-entropy with early stopping on validation
/// accuracy; returns the best-validation model and its accuracy.
pub fn train_classifier(
    labeled: &[Document],
    val: &[Document],
    config: &DanConfig,
    vampire: Option<Arc<FrozenVampire>>,
) -> Result<(DanModel, f64)> {
    config.validate()?;
    if labeled.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let train_y = labels_of(labeled, "training")?;
    let val_y = labels_of(val, "validation")?;
    let distinct: BTreeSet<usize> = train_y.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training labels cover {} class(es); need at least 2",
            distinct.len()
        )));
    }
    let num_classes = train_y.iter().chain(&val_y).max().unwrap() + 1;
    let mut model = DanModel::new(config.clone(), TokenIndex::build(labeled), num_classes, vampire)?;

    let train_ids = model.encode(labeled);
    let train_feats = model.doc_features(labeled)?;
    let val_ids = model.encode(val);
    let val_feats = model.doc_features(val)?;

    let adam = Adam::new(config.learning_rate);
    let mut rng = Rng::new(config.seed).derive(0x7a1);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut best: Option<DanModel> = None;
    let mut stale = 0;
    for _epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        for idx in order.chunks(config.batch_size) {
            let batch = DanBatch {
                tokens: idx.iter().map(|&i| train_ids[i].as_slice()).collect(),
                features: if train_feats.is_empty() {
                    Vec::new()
                } else {
                    idx.iter().map(|&i| &train_feats[i]).collect()
                },
                labels: idx.iter().map(|&i| train_y[i]).collect(),
            };
            let mask = if config.dropout > 0.0 {
                Some(dropout_mask(idx.len(), config.hidden_dim, config.dropout, &mut rng)?)
            } else {
                None
            };
            let (_, cache) = model.forward(&batch, mask.as_ref())?;
            model.zero_grads();
            model.backward(&batch, &cache)?;
            adam.step(model.parameters_mut())?;
        }
        let acc = accuracy(&model.probabilities(&val_ids, &val_feats)?, &val_y);
        if best.as_ref().is_none_or(|b| acc > b.val_accuracy) {
            model.val_accuracy = acc;
            best = Some(model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let best = best.expect("at least one epoch ran");
    let acc = best.val_accuracy;
    Ok((best, acc))
}

/// Class probabilities for each document, in input order.
pub fn predict_proba(model: &DanModel, docs: &[Document]) -> Result<Tensor> {
    let ids = model.encode(docs);
    let feats = model.doc_features(docs)?;
    model.probabilities(&ids, &feats)
}

/// Argmax accuracy (ties to the lowest class id) with per-class breakdown.
pub fn evaluate(model: &DanModel, docs: &[Document]) -> Result<EvalReport> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("no documents to evaluate".into()));
    }
    let y = labels_of(docs, "evaluation")?;
    let probs = predict_proba(model, docs)?;
    let classes = model.num_classes.max(y.iter().max().map_or(0, |m| m + 1));
    let mut seen = vec![0usize; classes];
    let mut hit = vec![0usize; classes];
    for (i, &label) in y.iter().enumerate() {
        seen[label] += 1;
        if argmax(probs.row(i)) == label {
            hit[label] += 1;
        }
    }
    let correct: usize = hit.iter().sum();
    Ok(EvalReport {
        accuracy: correct as f64 / y.len() as f64,
        n: y.len(),
        per_class_accuracy: (0..classes)
            .map(|c| ClassAccuracy {
                class: model.class_name(c),
                n: seen[c],
                accuracy: (seen[c] > 0).then(|| hit[c] as f64 / seen[c] as f64),
            })
            .collect(),
        seed: model.config.seed,
    })
}
