//! Self-training: retrain on labeled data plus confidently pseudo-labeled
//! pool documents, keeping whichever round validates best.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, predict_proba, train_classifier, DanConfig, DanModel, FrozenVampire};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Training rounds, the base model included.
pub const MAX_ITERATIONS: usize = 5;

/// Nearest-rank percentile of ascending `sorted`: the ⌈p·m⌉-th value, with
/// p given as `numer / denom` so small cases stay exact.
pub fn nearest_rank(sorted: &[f64], numer: usize, denom: usize) -> Option<f64> {
    let m = sorted.len();
    if m == 0 || denom == 0 {
        return None;
    }
    let rank = (numer * m).div_ceil(denom).clamp(1, m);
    Some(sorted[rank - 1])
}

/// Per class y, the 90th percentile of P(y) over validation documents whose
/// true label is y.
pub fn label_thresholds(model: &DanModel, val: &[Document]) -> Result<Vec<f64>> {
    let probs = predict_proba(model, val)?;
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); model.num_classes];
    for (i, d) in val.iter().enumerate() {
        let y = d
            .label
            .ok_or_else(|| Error::InvalidInput(format!("validation document `{}` has no label", d.id)))?;
        if y >= model.num_classes {
            return Err(Error::InvalidInput(format!("validation label {y} unknown to the model")));
        }
        per_class[y].push(probs.get(i, y));
    }
    per_class
        .into_iter()
        .enumerate()
        .map(|(c, mut ps)| {
            ps.sort_by(f64::total_cmp);
            nearest_rank(&ps, 9, 10)
                .ok_or_else(|| Error::InvalidInput(format!("class {c} has no validation documents")))
        })
        .collect()
}

/// Pool documents whose top-class probability reaches that class's
/// threshold, relabeled with the predicted class. Ties go to the lowest id.
pub fn pseudo_label(model: &DanModel, pool: &[Document], thresholds: &[f64]) -> Result<Vec<Document>> {
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let probs = predict_proba(model, pool)?;
    Ok(pool
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let row = probs.row(i);
            let c = crate::classifier::argmax(row);
            (row[c] >= thresholds[c]).then(|| Document {
                label: Some(c),
                ..d.clone()
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Pseudo-labeled documents this round's model was trained with.
    pub n_pseudo: usize,
    pub per_class_thresholds: Vec<f64>,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct SelfTrainOutcome {
    pub model: DanModel,
    pub best_iteration: usize,
    pub log: Vec<IterationRecord>,
}

fn check_disjoint(labeled: &[Document], unlabeled: &[Document], val: &[Document]) -> Result<()> {
    let mut seen = HashSet::new();
    for d in labeled.iter().chain(unlabeled).chain(val) {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "document `{}` appears in more than one of labeled, unlabeled and validation sets",
                d.id
            )));
        }
    }
    Ok(())
}

fn signature(docs: &[Document]) -> Vec<(&str, Option<usize>)> {
    docs.iter().map(|d| (d.id.as_str(), d.label)).collect()
}

/// Up to [`MAX_ITERATIONS`] rounds; pseudo-labels are recomputed from the
/// whole pool each round. Stops early once a round would retrain on the same
/// set as before. Writes one JSON line per round to `log_path` if given.
pub fn self_train(
    labeled: &[Document],
    unlabeled: &[Document],
    val: &[Document],
    config: &DanConfig,
    vampire: Option<Arc<FrozenVampire>>,
    log_path: Option<&Path>,
) -> Result<SelfTrainOutcome> {
    check_disjoint(labeled, unlabeled, val)?;
    let mut log_file = match log_path {
        Some(p) => Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut log = Vec::new();
    let mut best: Option<(DanModel, usize)> = None;
    let mut pseudo: Vec<Document> = Vec::new();
    for iteration in 0..MAX_ITERATIONS {
        let mut train = labeled.to_vec();
        train.extend(pseudo.iter().cloned());
        let (model, val_accuracy) = train_classifier(&train, val, config, vampire.clone())?;
        let thresholds = label_thresholds(&model, val)?;
        let record = IterationRecord {
            iteration,
            n_pseudo: pseudo.len(),
            per_class_thresholds: thresholds.clone(),
            val_accuracy,
        };
        log::info!(
            "self-training round {iteration}: {} pseudo-labels, val accuracy {val_accuracy:.4}",
            pseudo.len()
        );
        if let (Some(f), Some(p)) = (log_file.as_mut(), log_path) {
            writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(p, e))?;
        }
        log.push(record);
        let next = pseudo_label(&model, unlabeled, &thresholds)?;
        if best.as_ref().is_none_or(|(b, _)| val_accuracy > b.val_accuracy) {
            best = Some((model, iteration));
        }
        if next.is_empty() || signature(&next) == signature(&pseudo) {
            break;
        }
        pseudo = next;
    }
    let (model, best_iteration) = best.expect("at least one round ran");
    Ok(SelfTrainOutcome {
        model,
        best_iteration,
        log,
    })
}

/// Accuracy of the self-trained model on `test`, for experiment tables.
pub fn self_train_accuracy(outcome: &SelfTrainOutcome, test: &[Document]) -> Result<f64> {
    Ok(evaluate(&outcome.model, test)?.accuracy)
}
