use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenize::{is_digit, is_punctuation};
use super::Document;
use crate::error::{Error, Result};

const SNOWBALL_ENGLISH: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    /// The Snowball English list.
    pub fn english() -> Self {
        Self::parse(SNOWBALL_ENGLISH)
    }

    pub fn empty() -> Self {
        Stopwords(BTreeSet::new())
    }

    /// One word per line; `|` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.split('|').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Whether a token may enter the topic-model vocabulary: at least three
/// characters, no digits, no punctuation or symbols, not a stopword.
pub fn is_eligible(token: &str, stopwords: &Stopwords) -> bool {
    token.chars().count() >= 3
        && !token.chars().any(|c| is_digit(c) || is_punctuation(c))
        && !stopwords.contains(token)
}

/// Token ↔ id mapping; ids are positions in `tokens`, ordered by descending
/// corpus frequency with lexicographic tie-breaks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, u32>,
    pub stopwords: Stopwords,
    pub size_limit: usize,
}

impl Vocabulary {
    /// Wraps an existing ordered token list (e.g. one read from disk).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary {
            frequencies: vec![0; tokens.len()],
            size_limit: tokens.len().max(1),
            tokens,
            index,
            stopwords: Stopwords::empty(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// Hex SHA-256 prefix over the ordered token list; pins checkpoints to
    /// the vocabulary they were trained with.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let tokens = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(tokens).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// The `size_limit` most frequent eligible tokens. Frequencies are counted
/// on the (already lowercased) token stream.
pub fn build_vocabulary(docs: &[Document], size_limit: usize, stopwords: &Stopwords) -> Result<Vocabulary> {
    if size_limit == 0 {
        return Err(Error::Config("vocabulary size limit must be positive".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(t, _)| is_eligible(t, stopwords))
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(size_limit);

    let tokens: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let mut vocab = Vocabulary::from_tokens(tokens)?;
    vocab.frequencies = ranked.iter().map(|&(_, c)| c).collect();
    vocab.stopwords = stopwords.clone();
    vocab.size_limit = size_limit;
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(tokens: &[&str]) -> Document {
        Document::new("d", tokens.iter().map(|s| s.to_string()).collect(), None)
    }

    #[test]
    fn exclusion_filters() {
        let docs = [doc(&["ab", "c3po", "the", "dog", "it's", "dog"])];
        let v = build_vocabulary(&docs, 10, &Stopwords::english()).unwrap();
        assert_eq!(v.tokens(), ["dog"]);
        assert_eq!(v.frequencies(), [2]);
    }

    #[test]
    fn ties_broken_lexicographically() {
        let mut tokens = vec!["dog"; 5];
        tokens.extend(["cat"; 5]);
        tokens.push("emu");
        let v = build_vocabulary(&[doc(&tokens)], 2, &Stopwords::empty()).unwrap();
        assert_eq!(v.tokens(), ["cat", "dog"]);
    }

    #[test]
    fn fewer_eligible_than_limit_returns_all() {
        let v = build_vocabulary(&[doc(&["alpha", "beta"])], 100, &Stopwords::empty()).unwrap();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn zero_limit_is_rejected() {
        assert!(build_vocabulary(&[], 0, &Stopwords::empty()).is_err());
    }

    #[test]
    fn snowball_list_loaded() {
        let s = Stopwords::english();
        assert!(s.contains("the") && s.contains("ourselves") && s.contains("mustn't"));
        assert!(!s.contains("horror"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocabulary(&[doc(&["zebra", "yak", "yak"])], 5, &Stopwords::empty()).unwrap();
        v.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "yak\nzebra\n");
        let back = Vocabulary::read(&path).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.checksum(), v.checksum());
    }

    const WORDS: &[&str] = &["apple", "banana", "cherry", "ab", "x9y", "the", "grape", "melon", "kiwi"];

    proptest! {
        #[test]
        fn permutation_invariant_and_filtered(
            picks in prop::collection::vec(prop::collection::vec(0..WORDS.len(), 0..12), 1..8),
            limit in 1usize..6,
            seed in any::<u64>(),
        ) {
            let docs: Vec<Document> = picks
                .iter()
                .map(|p| doc(&p.iter().map(|&i| WORDS[i]).collect::<Vec<_>>()))
                .collect();
            let stop = Stopwords::english();
            let v = build_vocabulary(&docs, limit, &stop).unwrap();
            let mut shuffled = docs.clone();
            crate::numerics::Rng::new(seed).shuffle(&mut shuffled);
            prop_assert_eq!(&build_vocabulary(&shuffled, limit, &stop).unwrap(), &v);
            prop_assert!(v.len() <= limit);
            for t in v.tokens() {
                prop_assert!(is_eligible(t, &stop));
            }
            for w in v.frequencies().windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
