use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vampire_core::classifier::DanConfig;
use vampire_core::pipeline::{Protocol, SearchSpace};
use vampire_core::vampire::{StoppingCriterion, VampireConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// One stopword per line; the built-in English list when absent.
    pub stopwords: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub space: SearchSpace,
    pub n_trials: usize,
    pub parallelism: usize,
    pub criterion: StoppingCriterion,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            space: SearchSpace::default(),
            n_trials: 60,
            parallelism: 1,
            criterion: StoppingCriterion::Npmi,
        }
    }
}

/// The `--config` file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: CorpusSection,
    pub vampire: VampireConfig,
    pub classifier: DanConfig,
    pub search: SearchSection,
    pub protocol: Protocol,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
