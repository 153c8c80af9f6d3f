//! `.vam` checkpoints: the array container with the config, vocabulary
//! checksum and selection metadata in the header.

use std::path::Path;

use serde_json::json;

use super::{VampireConfig, VampireModel};
use crate::error::{Error, Result};
use crate::numerics::{ArrayBundle, Dtype, Tensor};

const FORMAT: &str = "vam/1";

impl VampireModel {
    pub fn to_bundle(&self) -> ArrayBundle {
        let mut b = ArrayBundle::new(json!({
            "format": FORMAT,
            "config": self.config,
            "vocab_hash": self.vocab_hash,
            "vocab_size": self.vocab_size(),
            "criterion_value": self.criterion_value,
            "epoch": self.epoch,
        }));
        for (l, layer) in self.encoder.iter().enumerate() {
            b.push(format!("encoder.{l}.weight"), &layer.weight.value);
            b.push(format!("encoder.{l}.bias"), &layer.bias.value);
        }
        b.push("mu.weight", &self.mu.weight.value);
        b.push("mu.bias", &self.mu.bias.value);
        b.push("log_sigma.weight", &self.log_sigma.weight.value);
        b.push("log_sigma.bias", &self.log_sigma.bias.value);
        b.push("topics", &self.topics.value);
        b.push("background", &self.background.value);
        b.push("bn.gamma", &self.bn.gamma.value);
        b.push("bn.beta", &self.bn.beta.value);
        b.push("bn.running_mean", &Tensor::row_vector(&self.bn.running_mean));
        b.push("bn.running_var", &Tensor::row_vector(&self.bn.running_var));
        b
    }

    pub fn from_bundle(mut b: ArrayBundle) -> Result<Self> {
        let meta = &b.meta;
        if meta["format"] != FORMAT {
            return Err(Error::InvalidInput(format!(
                "not a {FORMAT} checkpoint (format {})",
                meta["format"]
            )));
        }
        let config: VampireConfig = serde_json::from_value(meta["config"].clone())?;
        let v = meta["vocab_size"]
            .as_u64()
            .ok_or_else(|| Error::InvalidInput("checkpoint lacks vocab_size".into()))? as usize;
        let vocab_hash = meta["vocab_hash"].as_str().unwrap_or_default().to_string();
        let criterion_value = meta["criterion_value"].as_f64();
        let epoch = meta["epoch"].as_u64().unwrap_or(0) as usize;

        let mut m = VampireModel::new(config, &vec![0.0; v], vocab_hash)?;
        let k = m.num_topics();
        for (l, layer) in m.encoder.iter_mut().enumerate() {
            let in_dim = layer.in_dim();
            layer.weight.value = b.take(&format!("encoder.{l}.weight"), (in_dim, k))?;
            layer.bias.value = b.take(&format!("encoder.{l}.bias"), (1, k))?;
        }
        m.mu.weight.value = b.take("mu.weight", (k, k))?;
        m.mu.bias.value = b.take("mu.bias", (1, k))?;
        m.log_sigma.weight.value = b.take("log_sigma.weight", (k, k))?;
        m.log_sigma.bias.value = b.take("log_sigma.bias", (1, k))?;
        m.topics.value = b.take("topics", (k, v))?;
        m.background.value = b.take("background", (1, v))?;
        m.bn.gamma.value = b.take("bn.gamma", (1, v))?;
        m.bn.beta.value = b.take("bn.beta", (1, v))?;
        m.bn.running_mean = b.take("bn.running_mean", (1, v))?.into_vec();
        m.bn.running_var = b.take("bn.running_var", (1, v))?.into_vec();
        m.criterion_value = criterion_value;
        m.epoch = epoch;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle().save(path, Dtype::F64)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(ArrayBundle::load(path)?).map_err(|e| match e {
            Error::InvalidInput(detail) | Error::Config(detail) => Error::format(path, detail),
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }
}
