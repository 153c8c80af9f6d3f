//! `.dan` checkpoints. The classifier's token list lives beside the array
//! file in `<path>.vocab`, one token per line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use super::{DanConfig, DanModel, FrozenVampire, ScalarMix, TokenIndex};
use crate::error::{Error, Result};
use crate::numerics::{ArrayBundle, Dtype};

const FORMAT: &str = "dan/1";

pub fn vocab_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

impl DanModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut b = ArrayBundle::new(json!({
            "format": FORMAT,
            "config": self.config,
            "num_classes": self.num_classes,
            "labels": self.labels,
            "vampire_hash": self.vampire.as_ref().map(|v| v.vocab.checksum()),
            "n_sources": self.mix.as_ref().map_or(0, ScalarMix::len),
            "feature_dim": self.feature_dim(),
            "val_accuracy": self.val_accuracy,
        }));
        b.push("embeddings", &self.embeddings.value);
        if let Some(mix) = &self.mix {
            b.push("mix.logits", &mix.logits.value);
        }
        b.push("hidden.weight", &self.hidden.weight.value);
        b.push("hidden.bias", &self.hidden.bias.value);
        b.push("output.weight", &self.output.weight.value);
        b.push("output.bias", &self.output.bias.value);
        b.save(path, Dtype::F64)?;
        self.tokens.write(&vocab_path(path))
    }

    /// Loads a classifier; models trained with document-model features need
    /// the same frozen model back.
    pub fn load(path: &Path, vampire: Option<Arc<FrozenVampire>>) -> Result<Self> {
        let fmt = |d: String| Error::format(path, d);
        let mut b = ArrayBundle::load(path)?;
        let meta = b.meta.clone();
        if meta["format"] != FORMAT {
            return Err(fmt(format!("not a {FORMAT} checkpoint (format {})", meta["format"])));
        }
        let config: DanConfig = serde_json::from_value(meta["config"].clone()).map_err(|e| fmt(e.to_string()))?;
        let num_classes = meta["num_classes"].as_u64().ok_or_else(|| fmt("missing num_classes".into()))? as usize;
        let labels: Vec<String> = serde_json::from_value(meta["labels"].clone()).unwrap_or_default();
        let n_sources = meta["n_sources"].as_u64().unwrap_or(0) as usize;
        let feature_dim = meta["feature_dim"].as_u64().unwrap_or(0) as usize;
        let vampire = match (meta["vampire_hash"].as_str(), vampire) {
            (None, _) => None,
            (Some(_), None) => {
                return Err(Error::InvalidInput(
                    "this classifier uses document-model features; supply the pretrained model".into(),
                ))
            }
            (Some(hash), Some(v)) => {
                if v.vocab.checksum() != hash || v.dim() != feature_dim || v.sources() != n_sources {
                    return Err(Error::InvalidInput(
                        "the supplied document model does not match the one this classifier was trained with".into(),
                    ));
                }
                Some(v)
            }
        };
        let tokens = TokenIndex::read(&vocab_path(path))?;
        let mut m = DanModel::new(config, tokens, num_classes, vampire).map_err(|e| fmt(e.to_string()))?;
        let shape = |r, c| (r, c);
        let d = m.config.embedding_dim;
        let h = m.config.hidden_dim;
        m.embeddings.value = b.take("embeddings", shape(m.tokens.len(), d)).map_err(|e| fmt(e.to_string()))?;
        if let Some(mix) = &mut m.mix {
            mix.logits.value = b.take("mix.logits", (1, n_sources)).map_err(|e| fmt(e.to_string()))?;
        }
        m.hidden.weight.value = b.take("hidden.weight", (feature_dim + d, h)).map_err(|e| fmt(e.to_string()))?;
        m.hidden.bias.value = b.take("hidden.bias", (1, h)).map_err(|e| fmt(e.to_string()))?;
        m.output.weight.value = b.take("output.weight", (h, num_classes)).map_err(|e| fmt(e.to_string()))?;
        m.output.bias.value = b.take("output.bias", (1, num_classes)).map_err(|e| fmt(e.to_string()))?;
        m.labels = labels;
        m.val_accuracy = meta["val_accuracy"].as_f64().unwrap_or(0.0);
        Ok(m)
    }
}
