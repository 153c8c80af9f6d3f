use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, train_classifier, DanConfig, FrozenVampire};
use crate::corpus::{sample_labeled_subset, Document};
use crate::error::{Error, Result};
use crate::semisup::self_train;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Word embeddings learned from the labeled data only.
    Baseline,
    SelfTraining,
    /// Baseline plus frozen pretrained document-model features.
    Vampire,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "Baseline",
            Method::SelfTraining => "Self-training",
            Method::Vampire => "VAMPIRE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub label_budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            label_budgets: vec![200, 500, 2500, 10000],
            seeds: (0..5).collect(),
            methods: vec![Method::Baseline, Method::SelfTraining, Method::Vampire],
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.label_budgets.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("protocol needs label budgets, seeds and methods".into()));
        }
        Ok(())
    }
}

/// Splits an experiment draws from. Labeled subsets come from `pool`; the
/// rest of the pool plus `unlabeled` feeds self-training.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentData<'a> {
    pub pool: &'a [Document],
    pub unlabeled: &'a [Document],
    pub val: &'a [Document],
    pub test: &'a [Document],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub budget: usize,
    /// One per seed, in protocol order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub budgets: Vec<usize>,
    pub methods: Vec<Method>,
    pub cells: Vec<Cell>,
}

/// Mean and sample standard deviation; one value has deviation 0.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

impl ExperimentTable {
    pub fn cell(&self, method: Method, budget: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.budget == budget)
    }

    /// Rows are methods, columns label budgets; cells read `mean (std)` in
    /// accuracy points.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for b in &self.budgets {
            out.push_str(&format!(",{b}"));
        }
        out.push('\n');
        for m in &self.methods {
            out.push_str(&m.to_string());
            for &b in &self.budgets {
                match self.cell(*m, b) {
                    Some(c) => out.push_str(&format!(",{:.1} ({:.1})", 100.0 * c.mean, 100.0 * c.std)),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Runs `accuracy(method, budget, seed)` over the protocol grid and
/// aggregates per (method, budget).
pub fn run_experiment_with(
    protocol: &Protocol,
    mut accuracy: impl FnMut(Method, usize, u64) -> Result<f64>,
) -> Result<ExperimentTable> {
    protocol.validate()?;
    let mut cells = Vec::new();
    for &budget in &protocol.label_budgets {
        for &method in &protocol.methods {
            let accuracies = protocol
                .seeds
                .iter()
                .map(|&seed| {
                    let acc = accuracy(method, budget, seed)?;
                    log::info!("{method} budget {budget} seed {seed}: accuracy {acc:.4}");
                    Ok(acc)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_and_std(&accuracies);
            cells.push(Cell {
                method,
                budget,
                accuracies,
                mean,
                std,
            });
        }
    }
    Ok(ExperimentTable {
        budgets: protocol.label_budgets.clone(),
        methods: protocol.methods.clone(),
        cells,
    })
}

/// Test accuracy of each method on labeled subsets drawn per (budget, seed);
/// every method sees the same subset for a given pair.
pub fn run_experiment(
    protocol: &Protocol,
    data: ExperimentData,
    dan: &DanConfig,
    vampire: Option<Arc<FrozenVampire>>,
) -> Result<ExperimentTable> {
    if protocol.methods.contains(&Method::Vampire) && vampire.is_none() {
        return Err(Error::Config("the VAMPIRE method needs a pretrained model".into()));
    }
    run_experiment_with(protocol, |method, budget, seed| {
        let sample = sample_labeled_subset(data.pool, budget, seed)?;
        let config = DanConfig { seed, ..dan.clone() };
        let model = match method {
            Method::Baseline => train_classifier(&sample.labeled, data.val, &config, None)?.0,
            Method::Vampire => train_classifier(&sample.labeled, data.val, &config, vampire.clone())?.0,
            Method::SelfTraining => {
                let mut unlabeled: Vec<Document> = sample
                    .remainder
                    .iter()
                    .map(|d| Document {
                        label: None,
                        ..d.clone()
                    })
                    .collect();
                unlabeled.extend(data.unlabeled.iter().cloned());
                self_train(&sample.labeled, &unlabeled, data.val, &config, None, None)?.model
            }
        };
        Ok(evaluate(&model, data.test)?.accuracy)
    })
}
