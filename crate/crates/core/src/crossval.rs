//! Task/fold cross-validation planning.
//!
//! Each synthetic task is paired with one data fold. An iteration trains on a
//! subset of `T` tasks and validates on the rest; the folds paired with the
//! larger of the two task partitions become training data and the remaining
//! folds validation data. With five tasks this yields `C(5, T)` iterations
//! instead of `F * C(5, T)` for a full product over tasks and folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tasks::TaskKind;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAssignment {
    pub sample_id: String,
    pub fold: usize,
}

/// Task `i` is paired with fold `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskFoldAssignment {
    pub tasks: Vec<TaskKind>,
    pub samples: Vec<SampleAssignment>,
}

impl TaskFoldAssignment {
    pub fn new(tasks: Vec<TaskKind>, samples: Vec<SampleAssignment>) -> Result<Self> {
        let unique: BTreeSet<_> = tasks.iter().collect();
        if unique.len() != tasks.len() || tasks.len() < 2 {
            return Err(Error::invalid("need at least two distinct tasks"));
        }
        if let Some(s) = samples.iter().find(|s| s.fold >= tasks.len()) {
            return Err(Error::invalid(format!(
                "sample {} in fold {} but only {} folds are paired with tasks",
                s.sample_id,
                s.fold,
                tasks.len()
            )));
        }
        Ok(Self { tasks, samples })
    }

    pub fn folds(&self) -> usize {
        self.tasks.len()
    }

    pub fn fold_of(&self, task: TaskKind) -> Option<usize> {
        self.tasks.iter().position(|&t| t == task)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIteration {
    pub id: usize,
    pub train_tasks: Vec<TaskKind>,
    pub val_tasks: Vec<TaskKind>,
    pub train_folds: Vec<usize>,
    pub val_folds: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub tasks: Vec<TaskKind>,
    pub folds: usize,
    pub iterations: Vec<SplitIteration>,
}

/// Balanced random partition of `sample_ids` into `folds` folds; fold sizes
/// differ by at most one. Output keeps the input order.
pub fn assign_folds(sample_ids: &[String], folds: usize, rng: &mut RngStream) -> Result<Vec<SampleAssignment>> {
    if folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if sample_ids.len() < folds {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {folds} folds",
            sample_ids.len()
        )));
    }
    let unique: BTreeSet<_> = sample_ids.iter().collect();
    if unique.len() != sample_ids.len() {
        return Err(Error::invalid("duplicate sample ids"));
    }
    let mut order: Vec<usize> = (0..sample_ids.len()).collect();
    order.shuffle(rng);
    let mut fold = vec![0; sample_ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    Ok(sample_ids
        .iter()
        .zip(fold)
        .map(|(id, fold)| SampleAssignment {
            sample_id: id.clone(),
            fold,
        })
        .collect())
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Whether the folds paired with the training tasks are the training data.
/// The larger task partition owns the training data; ties go to the
/// training tasks.
fn train_tasks_own_training_folds(train_tasks: usize, val_tasks: usize) -> bool {
    train_tasks >= val_tasks
}

/// One iteration per `T`-subset of tasks.
pub fn enumerate_splits(assignment: &TaskFoldAssignment, train_count: usize) -> Result<SplitPlan> {
    let n = assignment.tasks.len();
    if train_count == 0 || train_count >= n {
        return Err(Error::invalid(format!(
            "train task count {train_count} leaves no {} tasks (have {n})",
            if train_count == 0 { "training" } else { "validation" }
        )));
    }
    let iterations = combinations(n, train_count)
        .into_iter()
        .enumerate()
        .map(|(id, subset)| {
            let rest: Vec<usize> = (0..n).filter(|i| !subset.contains(i)).collect();
            let (train_folds, val_folds) = if train_tasks_own_training_folds(subset.len(), rest.len()) {
                (subset.clone(), rest.clone())
            } else {
                (rest.clone(), subset.clone())
            };
            SplitIteration {
                id,
                train_tasks: subset.iter().map(|&i| assignment.tasks[i]).collect(),
                val_tasks: rest.iter().map(|&i| assignment.tasks[i]).collect(),
                train_folds,
                val_folds,
            }
        })
        .collect();
    Ok(SplitPlan {
        tasks: assignment.tasks.clone(),
        folds: n,
        iterations,
    })
}

/// Full product over task subsets and held-out folds (`F * C(T_N, T)`
/// iterations): every task subset is combined with every single validation
/// fold.
pub fn enumerate_full_product(assignment: &TaskFoldAssignment, train_count: usize) -> Result<SplitPlan> {
    let paired = enumerate_splits(assignment, train_count)?;
    let folds = assignment.folds();
    let mut iterations = Vec::new();
    for it in &paired.iterations {
        for held_out in 0..folds {
            iterations.push(SplitIteration {
                id: iterations.len(),
                train_tasks: it.train_tasks.clone(),
                val_tasks: it.val_tasks.clone(),
                train_folds: (0..folds).filter(|&f| f != held_out).collect(),
                val_folds: vec![held_out],
            });
        }
    }
    Ok(SplitPlan {
        tasks: paired.tasks,
        folds,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestIteration {
    pub id: usize,
    pub train_tasks: Vec<TaskKind>,
    pub val_tasks: Vec<TaskKind>,
    pub train_folds: Vec<usize>,
    pub val_folds: Vec<usize>,
    pub train_samples: Vec<String>,
    pub val_samples: Vec<String>,
}

/// Machine-readable split manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub tasks: Vec<TaskKind>,
    pub folds: usize,
    pub iterations: Vec<ManifestIteration>,
}

impl Manifest {
    pub fn iteration(&self, id: usize) -> Result<&ManifestIteration> {
        self.iterations
            .iter()
            .find(|it| it.id == id)
            .ok_or_else(|| Error::invalid(format!("manifest has no iteration {id}")))
    }

    pub fn to_plan(&self) -> SplitPlan {
        SplitPlan {
            tasks: self.tasks.clone(),
            folds: self.folds,
            iterations: self
                .iterations
                .iter()
                .map(|it| SplitIteration {
                    id: it.id,
                    train_tasks: it.train_tasks.clone(),
                    val_tasks: it.val_tasks.clone(),
                    train_folds: it.train_folds.clone(),
                    val_folds: it.val_folds.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Data(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }
}

/// Expand a plan into explicit sample lists per role.
pub fn emit_manifest(plan: &SplitPlan, samples: &[SampleAssignment], seed: u64) -> Result<Manifest> {
    let mut by_fold: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::invalid(format!("duplicate sample id {:?}", s.sample_id)));
        }
        if s.fold >= plan.folds {
            return Err(Error::invalid(format!(
                "sample {:?} assigned to unknown fold {}",
                s.sample_id, s.fold
            )));
        }
        by_fold.entry(s.fold).or_default().push(s.sample_id.clone());
    }
    let collect = |folds: &[usize]| -> Vec<String> {
        let mut ids: Vec<String> = folds
            .iter()
            .flat_map(|f| by_fold.get(f).cloned().unwrap_or_default())
            .collect();
        ids.sort();
        ids
    };
    let iterations = plan
        .iterations
        .iter()
        .map(|it| ManifestIteration {
            id: it.id,
            train_tasks: it.train_tasks.clone(),
            val_tasks: it.val_tasks.clone(),
            train_folds: it.train_folds.clone(),
            val_folds: it.val_folds.clone(),
            train_samples: collect(&it.train_folds),
            val_samples: collect(&it.val_folds),
        })
        .collect();
    Ok(Manifest {
        version: MANIFEST_VERSION,
        seed,
        tasks: plan.tasks.clone(),
        folds: plan.folds,
        iterations,
    })
}
