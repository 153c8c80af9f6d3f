//! NPMI topic coherence over document-level co-occurrence in a reference
//! corpus (the validation split).

use std::path::Path;

use crate::corpus::{
    read_count_cache, to_counts, write_count_cache, CountVector, Document, Vocabulary,
};
use crate::error::{Error, Result};
use crate::vampire::VampireModel;

/// Words per topic used for coherence scoring.
pub const TOPIC_WORDS: usize = 10;

/// Binary document co-occurrence counts. Pair counts are computed on demand
/// from per-word document bitsets, so memory stays linear in the number of
/// observed words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooccurrenceStats {
    doc_count: u32,
    doc_freq: Vec<u32>,
    postings: Vec<Vec<u64>>,
}

impl CooccurrenceStats {
    /// Counts each word once per document it appears in.
    pub fn from_counts(docs: &[CountVector], vocab_size: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("reference corpus is empty".into()));
        }
        let words = docs.len().div_ceil(64);
        let mut postings: Vec<Vec<u64>> = vec![Vec::new(); vocab_size];
        let mut doc_freq = vec![0u32; vocab_size];
        for (d, doc) in docs.iter().enumerate() {
            for &(id, _) in doc.entries() {
                let id = id as usize;
                if id >= vocab_size {
                    return Err(Error::InvalidInput(format!(
                        "word id {id} outside vocabulary of {vocab_size}"
                    )));
                }
                let bits = &mut postings[id];
                if bits.is_empty() {
                    bits.resize(words, 0);
                }
                bits[d / 64] |= 1 << (d % 64);
                doc_freq[id] += 1;
            }
        }
        Ok(CooccurrenceStats {
            doc_count: docs.len() as u32,
            doc_freq,
            postings,
        })
    }

    pub fn doc_count(&self) -> u32 {
        self.doc_count
    }

    pub fn vocab_size(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq.get(id as usize).copied().unwrap_or(0)
    }

    /// Number of reference documents containing both words.
    pub fn pair_freq(&self, i: u32, j: u32) -> u32 {
        match (self.postings.get(i as usize), self.postings.get(j as usize)) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
            }
            _ => 0,
        }
    }

    /// The reference corpus as per-document word sets in count-cache layout
    /// (every count 1, document ids are positions).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut docs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.doc_count as usize];
        for (id, bits) in self.postings.iter().enumerate() {
            for (w, &word) in bits.iter().enumerate() {
                let mut rest = word;
                while rest != 0 {
                    let b = rest.trailing_zeros() as usize;
                    docs[w * 64 + b].push((id as u32, 1));
                    rest &= rest - 1;
                }
            }
        }
        let records: Vec<(String, CountVector)> = docs
            .into_iter()
            .enumerate()
            .map(|(d, pairs)| (d.to_string(), CountVector::from_pairs(pairs)))
            .collect();
        write_count_cache(path, &records)
    }

    pub fn read_cache(path: &Path, vocab_size: usize) -> Result<Self> {
        let docs: Vec<CountVector> = read_count_cache(path)?.into_iter().map(|(_, c)| c).collect();
        Self::from_counts(&docs, vocab_size)
    }
}

pub fn build_stats(ref_docs: &[Document], vocab: &Vocabulary) -> Result<CooccurrenceStats> {
    let counts: Vec<CountVector> = ref_docs.iter().map(|d| to_counts(d, vocab).0).collect();
    CooccurrenceStats::from_counts(&counts, vocab.len())
}

/// NPMI of a word pair. `Ok(None)` when either word never occurs in the
/// reference corpus; a pair that never co-occurs scores −1.
pub fn npmi_pair(i: u32, j: u32, stats: &CooccurrenceStats) -> Result<Option<f64>> {
    if i == j {
        return Err(Error::InvalidInput(format!("npmi of word {i} with itself")));
    }
    let (fi, fj) = (stats.doc_freq(i), stats.doc_freq(j));
    if fi == 0 || fj == 0 {
        return Ok(None);
    }
    let joint = stats.pair_freq(i, j);
    if joint == 0 {
        return Ok(Some(-1.0));
    }
    let n = stats.doc_count as f64;
    if joint == stats.doc_count {
        // both words are in every document
        return Ok(Some(1.0));
    }
    let (joint, fi, fj) = (joint as f64, fi as f64, fj as f64);
    let pmi = (joint * n / (fi * fj)).ln();
    let norm = (n / joint).ln();
    Ok(Some((pmi / norm).clamp(-1.0, 1.0)))
}

/// Mean NPMI over unordered pairs with a defined score; `None` if no pair
/// is defined.
pub fn npmi_topic(top_words: &[u32], stats: &CooccurrenceStats) -> Result<Option<f64>> {
    if top_words.len() < 2 {
        return Err(Error::InvalidInput("a topic needs at least two words".into()));
    }
    let mut total = 0.0;
    let mut defined = 0usize;
    for (a, &i) in top_words.iter().enumerate() {
        for &j in &top_words[a + 1..] {
            if let Some(v) = npmi_pair(i, j, stats)? {
                total += v;
                defined += 1;
            }
        }
    }
    Ok((defined > 0).then(|| total / defined as f64))
}

/// Per-topic scores and their mean over defined topics.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicCoherence {
    pub per_topic: Vec<Option<f64>>,
    pub global: f64,
}

pub fn npmi_of_topics(topics: &[Vec<u32>], stats: &CooccurrenceStats) -> Result<TopicCoherence> {
    if topics.is_empty() {
        return Err(Error::InvalidInput("no topics to score".into()));
    }
    let per_topic = topics
        .iter()
        .map(|t| npmi_topic(t, stats))
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = per_topic.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::InvalidInput(
            "no topic has a defined NPMI against the reference corpus".into(),
        ));
    }
    let global = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(TopicCoherence { per_topic, global })
}

/// Global NPMI of a model's topic matrix, using each topic's top ten words.
pub fn npmi_global(model: &VampireModel, stats: &CooccurrenceStats) -> Result<f64> {
    let n = TOPIC_WORDS.min(model.vocab_size());
    Ok(npmi_of_topics(&model.topic_ids(n), stats)?.global)
}
