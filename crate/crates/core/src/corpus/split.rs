use std::collections::{BTreeMap, HashSet};

use super::Document;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Sequence cap for the classifier's token path.
pub const MAX_SEQUENCE_TOKENS: usize = 400;

/// Keeps the first `max_len` tokens.
pub fn truncate_tokens(doc: &Document, max_len: usize) -> Result<Document> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be positive".into()));
    }
    let mut out = doc.clone();
    out.tokens.truncate(max_len);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub labeled: Vec<Document>,
    /// Training documents not drawn; they join the unlabeled pool.
    pub remainder: Vec<Document>,
}

/// Uniform sample of `n` documents without replacement, fixed by `seed`.
pub fn sample_labeled_subset(train: &[Document], n: usize, seed: u64) -> Result<LabeledSample> {
    if n > train.len() {
        return Err(Error::InvalidInput(format!(
            "cannot sample {n} labeled documents from {}",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut chosen = vec![false; train.len()];
    let labeled = order[..n]
        .iter()
        .map(|&i| {
            chosen[i] = true;
            train[i].clone()
        })
        .collect();
    let remainder = train
        .iter()
        .zip(&chosen)
        .filter(|(_, &c)| !c)
        .map(|(d, _)| d.clone())
        .collect();
    Ok(LabeledSample { labeled, remainder })
}

/// Sample of `n` documents whose label proportions follow the input's
/// (largest-remainder allocation). Unlabeled documents form their own stratum.
pub fn stratified_sample(docs: &[Document], n: usize, rng: &mut Rng) -> Result<(Vec<Document>, Vec<Document>)> {
    if n > docs.len() {
        return Err(Error::InvalidInput(format!(
            "cannot sample {n} documents from {}",
            docs.len()
        )));
    }
    let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        strata.entry(d.label).or_default().push(i);
    }
    let total = docs.len();
    let mut quota: Vec<(Option<usize>, usize, f64)> = strata
        .iter()
        .map(|(&k, members)| {
            let exact = n as f64 * members.len() as f64 / total as f64;
            (k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    for &q in by_remainder.iter().take(n - assigned) {
        quota[q].1 += 1;
    }
    let mut picked = vec![false; total];
    for (key, take, _) in &quota {
        let mut members = strata[key].clone();
        rng.shuffle(&mut members);
        for &i in members.iter().take(*take) {
            picked[i] = true;
        }
    }
    let mut sample = Vec::with_capacity(n);
    let mut rest = Vec::with_capacity(total - n);
    for (d, &p) in docs.iter().zip(&picked) {
        if p {
            sample.push(d.clone());
        } else {
            rest.push(d.clone());
        }
    }
    Ok((sample, rest))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train_labeled: Vec<Document>,
    pub unlabeled: Vec<Document>,
    pub validation: Vec<Document>,
    pub test: Vec<Document>,
}

impl DatasetSplit {
    /// Validates that the four lists are pairwise disjoint by id.
    pub fn new(
        train_labeled: Vec<Document>,
        unlabeled: Vec<Document>,
        validation: Vec<Document>,
        test: Vec<Document>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for (part, docs) in [
            ("train_labeled", &train_labeled),
            ("unlabeled", &unlabeled),
            ("validation", &validation),
            ("test", &test),
        ] {
            for d in docs.iter() {
                if !seen.insert(d.id.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "document `{}` appears twice (seen again in {part})",
                        d.id
                    )));
                }
            }
        }
        Ok(DatasetSplit {
            train_labeled,
            unlabeled,
            validation,
            test,
        })
    }

    /// Carves a labeled pool into stratified test and validation sets of the
    /// requested sizes, draws `n_labeled` training documents and leaves the
    /// rest (plus `extra_unlabeled`) as the unlabeled pool.
    pub fn partition(
        pool: &[Document],
        extra_unlabeled: Vec<Document>,
        validation_size: usize,
        test_size: usize,
        n_labeled: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let (test, rest) = stratified_sample(pool, test_size, &mut rng)?;
        let (validation, rest) = stratified_sample(&rest, validation_size, &mut rng)?;
        let sample = sample_labeled_subset(&rest, n_labeled, rng.next_u64())?;
        let mut unlabeled = sample.remainder;
        unlabeled.extend(extra_unlabeled);
        DatasetSplit::new(sample.labeled, unlabeled, validation, test)
    }
}
