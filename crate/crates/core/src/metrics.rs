//! Average precision and AUROC with tie handling, plus slice/sample
//! aggregation of voxel score maps.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Label values at or above this count as anomalous ground truth.
pub const LABEL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    targets: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, targets: Vec<bool>) -> Result<Self> {
        if scores.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} targets",
                scores.len(),
                targets.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self { scores, targets })
    }

    /// Voxel-level set from a score map and a label map of the same shape.
    pub fn from_maps(scores: &Tensor, labels: &Tensor) -> Result<Self> {
        scores.require_same_shape(labels)?;
        Self::new(
            scores.data().to_vec(),
            labels.data().iter().map(|&l| l >= LABEL_THRESHOLD).collect(),
        )
    }

    pub fn push(&mut self, score: f64, target: bool) {
        self.scores.push(score);
        self.targets.push(target);
    }

    pub fn extend(&mut self, other: ScoredSet) {
        self.scores.extend(other.scores);
        self.targets.extend(other.targets);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn positives(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.len() as f64
    }

    /// Indices sorted by score, then `(positives, negatives)` per run of
    /// equal scores in that order.
    fn tie_groups(&self, descending: bool) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let o = self.scores[a].total_cmp(&self.scores[b]);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            if prev.is_none_or(|p| p.partial_cmp(&s) != Some(Ordering::Equal)) {
                groups.push((0, 0));
                prev = Some(s);
            }
            let g = groups.last_mut().expect("pushed above");
            if self.targets[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Step-wise area under the precision/recall curve, one step per distinct
/// score threshold (highest first).
pub fn average_precision(set: &ScoredSet) -> Result<f64> {
    let positives = set.positives();
    if positives == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive target".into()));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut ap = 0.0;
    for (pos, neg) in set.tie_groups(true) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let recall_step = pos as f64 / positives as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += recall_step * precision;
        }
    }
    Ok(ap)
}

/// Mann-Whitney estimate of the ROC area with half credit for ties.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let positives = set.positives() as u64;
    let negatives = set.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both positive and negative targets".into()));
    }
    // twice the U statistic, kept integral
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    for (pos, neg) in set.tie_groups(false) {
        twice_u += 2 * pos as u128 * negatives_below + pos as u128 * neg as u128;
        negatives_below += neg as u128;
    }
    Ok(twice_u as f64 / (2 * positives as u128 * negatives as u128) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Mean,
    Max,
}

impl Reducer {
    pub fn reduce(self, values: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Reducer::Mean => {
                let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                sum / n as f64
            }
            Reducer::Max => values.into_iter().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl std::str::FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            _ => Err(Error::invalid(format!("unknown reducer {s:?} (expected mean or max)"))),
        }
    }
}

/// One score and target per slice along `axis`: the reduced voxel scores,
/// and whether any voxel in the slice is anomalous.
pub fn reduce_to_slices(scores: &Tensor, labels: &Tensor, axis: usize, reducer: Reducer) -> Result<ScoredSet> {
    scores.require_same_shape(labels)?;
    let shape = scores.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!("axis {axis} out of range for {}-d volume", shape.len())));
    }
    let strides = scores.strides();
    let n = shape[axis];
    let mut slice_scores: Vec<Vec<f64>> = vec![Vec::with_capacity(scores.len() / n); n];
    let mut slice_targets = vec![false; n];
    for (k, (&s, &l)) in scores.data().iter().zip(labels.data()).enumerate() {
        let i = (k / strides[axis]) % n;
        slice_scores[i].push(s);
        slice_targets[i] |= l >= LABEL_THRESHOLD;
    }
    ScoredSet::new(
        slice_scores.into_iter().map(|v| reducer.reduce(v)).collect(),
        slice_targets,
    )
}

/// Whole-sample score and target.
pub fn reduce_sample(scores: &Tensor, labels: &Tensor, reducer: Reducer) -> Result<(f64, bool)> {
    scores.require_same_shape(labels)?;
    Ok((
        reducer.reduce(scores.data().iter().copied()),
        labels.data().iter().any(|&l| l >= LABEL_THRESHOLD),
    ))
}
