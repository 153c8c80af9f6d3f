use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::SparseRows;

/// Sparse bag of words: `(id, count)` pairs sorted by id, all counts positive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountVector {
    entries: Vec<(u32, u32)>,
    total: u64,
}

impl CountVector {
    /// Builds from arbitrary pairs; duplicate ids are summed and zero counts
    /// dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut merged: BTreeMap<u32, u32> = BTreeMap::new();
        for (id, c) in pairs {
            if c > 0 {
                *merged.entry(id).or_default() += c;
            }
        }
        let entries: Vec<(u32, u32)> = merged.into_iter().collect();
        let total = entries.iter().map(|&(_, c)| c as u64).sum();
        CountVector { entries, total }
    }

    /// From a dense count array.
    pub fn from_dense(counts: &[u32]) -> Self {
        Self::from_pairs(counts.iter().enumerate().map(|(i, &c)| (i as u32, c)))
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// No in-vocabulary tokens; such vectors never enter VAE batches.
    pub fn is_degenerate(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, id: u32) -> u32 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map_or(0, |k| self.entries[k].1)
    }

    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }
}

/// Counts in-vocabulary tokens; the second value is the number of
/// out-of-vocabulary tokens dropped.
pub fn to_counts(doc: &Document, vocab: &Vocabulary) -> (CountVector, usize) {
    let mut oov = 0;
    let ids = doc.tokens.iter().filter_map(|t| match vocab.id(t) {
        Some(id) => Some((id, 1)),
        None => {
            oov += 1;
            None
        }
    });
    let counts = CountVector::from_pairs(ids.collect::<Vec<_>>());
    (counts, oov)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountedCorpus {
    /// One vector per input document, in input order.
    pub vectors: Vec<CountVector>,
    pub oov_tokens: u64,
    pub degenerate: usize,
}

impl CountedCorpus {
    /// Non-degenerate vectors, the ones usable for VAE training.
    pub fn usable(&self) -> Vec<CountVector> {
        self.vectors
            .iter()
            .filter(|c| !c.is_degenerate())
            .cloned()
            .collect()
    }
}

/// Counts every document in parallel; output order follows input order.
pub fn count_corpus(docs: &[Document], vocab: &Vocabulary) -> CountedCorpus {
    let counted: Vec<(CountVector, usize)> = docs.par_iter().map(|d| to_counts(d, vocab)).collect();
    let mut out = CountedCorpus::default();
    for (c, oov) in counted {
        out.oov_tokens += oov as u64;
        if c.is_degenerate() {
            out.degenerate += 1;
        }
        out.vectors.push(c);
    }
    out
}

/// Gathers a batch of count vectors into sparse rows of `f64` counts.
pub fn to_sparse_rows(batch: &[&CountVector], vocab_size: usize) -> SparseRows {
    SparseRows {
        cols: vocab_size,
        rows: batch
            .iter()
            .map(|c| c.entries.iter().map(|&(i, n)| (i, n as f64)).collect())
            .collect(),
    }
}

/// Binary count cache. Per document: `u32` id length, id bytes, `u32` entry
/// count, then `(u32 id, u32 count)` pairs sorted by id; all little-endian.
pub fn write_count_cache(path: &Path, records: &[(String, CountVector)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_count_cache(&mut w, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_count_cache(w: &mut impl Write, records: &[(String, CountVector)]) -> std::io::Result<()> {
    for (id, counts) in records {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        w.write_all(&(counts.entries.len() as u32).to_le_bytes())?;
        for &(i, c) in &counts.entries {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_count_cache(path: &Path) -> Result<Vec<(String, CountVector)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_count_cache(&bytes).map_err(|detail| Error::format(path, detail))
}

pub fn decode_count_cache(bytes: &[u8]) -> std::result::Result<Vec<(String, CountVector)>, String> {
    let mut pos = 0;
    let next_u32 = |pos: &mut usize| -> std::result::Result<u32, String> {
        let b = bytes
            .get(*pos..*pos + 4)
            .ok_or_else(|| format!("truncated at byte {pos}"))?;
        *pos += 4;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    };
    let mut out = Vec::new();
    while pos < bytes.len() {
        let id_len = next_u32(&mut pos)? as usize;
        let id = bytes
            .get(pos..pos + id_len)
            .ok_or_else(|| format!("truncated id at byte {pos}"))?;
        let id = String::from_utf8(id.to_vec()).map_err(|e| e.to_string())?;
        pos += id_len;
        let n = next_u32(&mut pos)? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let i = next_u32(&mut pos)?;
            let c = next_u32(&mut pos)?;
            if c == 0 {
                return Err(format!("zero count for id {i} in document `{id}`"));
            }
            if entries.last().is_some_and(|&(prev, _)| prev >= i) {
                return Err(format!("ids not strictly increasing in document `{id}`"));
            }
            entries.push((i, c));
        }
        let total = entries.iter().map(|&(_, c)| c as u64).sum();
        out.push((id, CountVector { entries, total }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn doc(tokens: &[&str]) -> Document {
        Document::new("d", tokens.iter().map(|s| s.to_string()).collect(), None)
    }

    #[test]
    fn direct_counting() {
        let (c, oov) = to_counts(&doc(&["dog", "dog", "cat"]), &vocab(&["cat", "dog"]));
        assert_eq!(c.entries(), &[(0, 1), (1, 2)]);
        assert_eq!(c.total(), 3);
        assert_eq!(oov, 0);
    }

    #[test]
    fn all_oov_and_empty_are_degenerate() {
        let (c, oov) = to_counts(&doc(&["zzz"]), &vocab(&["cat"]));
        assert!(c.is_degenerate());
        assert_eq!(oov, 1);
        let (c, _) = to_counts(&doc(&[]), &vocab(&["cat"]));
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn corpus_counters() {
        let v = vocab(&["cat"]);
        let counted = count_corpus(&[doc(&["cat", "zzz"]), doc(&["qqq"])], &v);
        assert_eq!(counted.oov_tokens, 2);
        assert_eq!(counted.degenerate, 1);
        assert_eq!(counted.usable().len(), 1);
    }

    #[test]
    fn cache_layout_is_bit_exact() {
        let records = vec![("a".to_string(), CountVector::from_pairs([(3, 2), (1, 1)]))];
        let mut bytes = Vec::new();
        encode_count_cache(&mut bytes, &records).unwrap();
        let expected: Vec<u8> = [
            &1u32.to_le_bytes()[..],
            b"a",
            &2u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &3u32.to_le_bytes(),
            &2u32.to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, expected);
        assert_eq!(decode_count_cache(&bytes).unwrap(), records);
        assert!(decode_count_cache(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn total_bounded_by_token_count(picks in prop::collection::vec(0usize..6, 0..40)) {
            let words = ["cat", "dog", "emu", "zzz", "qqq", "yak"];
            let d = doc(&picks.iter().map(|&i| words[i]).collect::<Vec<_>>());
            let (c, oov) = to_counts(&d, &vocab(&["cat", "dog", "emu"]));
            prop_assert!(c.total() as usize <= d.tokens.len());
            prop_assert_eq!(c.total() as usize + oov, d.tokens.len());
            prop_assert_eq!(c.total(), c.entries().iter().map(|&(_, n)| n as u64).sum::<u64>());
            prop_assert!(c.entries().iter().all(|&(i, n)| n > 0 && i < 3));
        }
    }
}
