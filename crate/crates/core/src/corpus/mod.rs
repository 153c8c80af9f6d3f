//! Ingestion: JSON-lines reading, tokenization, vocabulary construction,
//! count vectors and labeled-subset sampling.

mod counts;
mod split;
mod tokenize;
mod vocab;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use counts::{
    count_corpus, decode_count_cache, encode_count_cache, read_count_cache, to_counts, to_sparse_rows,
    write_count_cache, CountVector, CountedCorpus,
};
pub use split::{
    sample_labeled_subset, stratified_sample, truncate_tokens, DatasetSplit, LabeledSample,
    MAX_SEQUENCE_TOKENS,
};
pub use tokenize::{is_digit, is_punctuation, tokenize};
pub use vocab::{build_vocabulary, is_eligible, Stopwords, Vocabulary};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: Option<usize>) -> Self {
        Document {
            id: id.into(),
            tokens,
            label,
        }
    }

    /// Nothing survived tokenization.
    pub fn is_degenerate(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One line of an input file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: RawRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if rec.id.is_none() {
            rec.id = Some(format!("{}:{}", path.display(), n + 1));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Label strings ↔ class ids, ids assigned in sorted string order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RawRecord>) -> Self {
        let names: BTreeSet<String> = records.into_iter().filter_map(|r| r.label.clone()).collect();
        LabelSet {
            names: names.into_iter().collect(),
        }
    }

    pub fn from_names(names: Vec<String>) -> Self {
        LabelSet { names }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub documents: Vec<Document>,
    /// Documents with no tokens after preprocessing; kept, but counted.
    pub empty_documents: usize,
}

/// Tokenizes records in parallel; output order follows input order.
/// Labels unknown to `labels` are an error.
pub fn ingest(records: &[RawRecord], labels: &LabelSet) -> Result<Ingested> {
    let documents = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let label = match &r.label {
                Some(name) => Some(
                    labels
                        .id(name)
                        .ok_or_else(|| Error::InvalidInput(format!("unknown label `{name}`")))?,
                ),
                None => None,
            };
            let id = r.id.clone().unwrap_or_else(|| i.to_string());
            Ok(Document::new(id, tokenize(&r.text), label))
        })
        .collect::<Result<Vec<_>>>()?;
    let empty_documents = documents.iter().filter(|d| d.is_degenerate()).count();
    Ok(Ingested {
        documents,
        empty_documents,
    })
}
