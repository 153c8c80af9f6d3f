//! Planted-topic corpora: a mixture-of-unigrams generator with known topics,
//! used to check topic recovery and downstream gains end to end.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RawRecord};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n_topics: usize,
    pub vocab_size: usize,
    pub n_docs: usize,
    /// Document length is uniform over this inclusive range.
    pub min_len: usize,
    pub max_len: usize,
    /// Symmetric Dirichlet concentration of document-topic proportions.
    pub alpha: f64,
    /// Words with elevated weight in each topic; their share of the topic's
    /// mass is `core_mass`.
    pub core_words: usize,
    pub core_mass: f64,
    /// Probability that a token comes from the flat background instead of a
    /// topic.
    pub background_rate: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_topics: 5,
            vocab_size: 200,
            n_docs: 2000,
            min_len: 30,
            max_len: 60,
            alpha: 0.1,
            core_words: 10,
            core_mass: 0.9,
            background_rate: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedCorpus {
    /// Word strings by generator id.
    pub words: Vec<String>,
    /// `[n_topics][vocab_size]` word distributions.
    pub topic_word: Vec<Vec<f64>>,
    pub doc_topics: Vec<Vec<f64>>,
    /// Labels are the dominant topic, named `topic{k}`.
    pub documents: Vec<Document>,
}

/// Alphabetic, at least three characters, never a stopword: `zq` plus the
/// id written in base 26.
pub fn word_name(id: usize) -> String {
    let mut letters = Vec::new();
    let mut n = id;
    loop {
        letters.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    letters.reverse();
    format!("zq{}", String::from_utf8(letters).unwrap())
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_topics == 0 || self.vocab_size == 0 || self.n_docs == 0 {
            return bad("topics, vocabulary and documents must be positive");
        }
        if self.n_topics * self.core_words > self.vocab_size {
            return bad("core words of all topics must fit in the vocabulary");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("document lengths must satisfy 0 < min_len ≤ max_len");
        }
        if !(self.alpha > 0.0) || !(0.0..=1.0).contains(&self.core_mass) || !(0.0..1.0).contains(&self.background_rate) {
            return bad("alpha must be positive, core_mass in [0,1], background_rate in [0,1)");
        }
        Ok(())
    }

    /// Topic k owns the disjoint block of words `[k·c, (k+1)·c)` as its core
    /// (`c` = `core_words`); the rest of its mass is spread over a random
    /// quarter of the non-core words.
    pub fn generate(&self) -> Result<PlantedCorpus> {
        self.validate()?;
        let mut rng = Rng::new(self.seed);
        let (k, v, c) = (self.n_topics, self.vocab_size, self.core_words);
        let mut order: Vec<usize> = (0..v).collect();
        rng.shuffle(&mut order);
        let words: Vec<String> = order.iter().map(|&i| word_name(i)).collect();

        let shared: Vec<usize> = (k * c..v).collect();
        let mut topic_word = Vec::with_capacity(k);
        for t in 0..k {
            let mut dist = vec![0.0; v];
            let core = rng.dirichlet(&vec![5.0; c]);
            for (i, p) in core.iter().enumerate() {
                dist[t * c + i] = self.core_mass * p;
            }
            if !shared.is_empty() {
                let mut pool = shared.clone();
                rng.shuffle(&mut pool);
                let tail = &pool[..pool.len().div_ceil(4)];
                let weights = rng.dirichlet(&vec![1.0; tail.len()]);
                for (&w, p) in tail.iter().zip(&weights) {
                    dist[w] += (1.0 - self.core_mass) * p;
                }
            } else {
                for p in dist[t * c..(t + 1) * c].iter_mut() {
                    *p /= self.core_mass.max(f64::MIN_POSITIVE);
                }
            }
            topic_word.push(dist);
        }

        let mut documents = Vec::with_capacity(self.n_docs);
        let mut doc_topics = Vec::with_capacity(self.n_docs);
        let flat = vec![1.0; v];
        for d in 0..self.n_docs {
            let props = rng.dirichlet(&vec![self.alpha; k]);
            let len = self.min_len + rng.below((self.max_len - self.min_len + 1) as u64) as usize;
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let w = if rng.uniform() < self.background_rate {
                        rng.categorical(&flat)
                    } else {
                        let t = rng.categorical(&props);
                        rng.categorical(&topic_word[t])
                    };
                    words[w].clone()
                })
                .collect();
            let label = argmax(&props);
            documents.push(Document::new(format!("syn{d}"), tokens, Some(label)));
            doc_topics.push(props);
        }
        Ok(PlantedCorpus {
            words,
            topic_word,
            doc_topics,
            documents,
        })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl PlantedCorpus {
    pub fn label_names(&self) -> Vec<String> {
        (0..self.topic_word.len()).map(|k| format!("topic{k}")).collect()
    }

    /// The `n` most probable words of each true topic.
    pub fn top_words(&self, n: usize) -> Vec<Vec<String>> {
        self.topic_word
            .iter()
            .map(|dist| {
                let mut ids: Vec<usize> = (0..dist.len()).collect();
                ids.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
                ids.iter().take(n).map(|&i| self.words[i].clone()).collect()
            })
            .collect()
    }

    /// JSON-lines-ready records with string labels.
    pub fn records(&self) -> Vec<RawRecord> {
        let names = self.label_names();
        self.documents
            .iter()
            .map(|d| RawRecord {
                id: Some(d.id.clone()),
                text: d.tokens.join(" "),
                label: d.label.map(|l| names[l].clone()),
            })
            .collect()
    }
}

/// Greedy one-to-one matching of learned to true topics by shared-word
/// count; returns the mean overlap fraction over matched pairs.
pub fn greedy_topic_overlap(learned: &[Vec<String>], truth: &[Vec<String>]) -> f64 {
    if learned.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let sets: Vec<HashSet<&str>> = truth.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, l) in learned.iter().enumerate() {
        for (j, s) in sets.iter().enumerate() {
            let shared = l.iter().filter(|w| s.contains(w.as_str())).count();
            pairs.push((shared, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_l, mut used_t) = (vec![false; learned.len()], vec![false; truth.len()]);
    let mut total = 0.0;
    let mut matched = 0;
    for (shared, i, j) in pairs {
        if used_l[i] || used_t[j] {
            continue;
        }
        used_l[i] = true;
        used_t[j] = true;
        let size = learned[i].len().max(truth[j].len()).max(1);
        total += shared as f64 / size as f64;
        matched += 1;
    }
    total / matched as f64
}
