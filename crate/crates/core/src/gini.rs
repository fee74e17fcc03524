//! CART-style Gini scoring of the shallow features and the weights derived
//! from it.

use serde::{Deserialize, Serialize};

use crate::features::{ShallowFeatureVector, FEATURE_NAMES, NUM_FEATURES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GiniError {
    #[error("empty label set")]
    EmptySet,
    #[error("{values} values but {labels} labels")]
    LengthMismatch { values: usize, labels: usize },
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite feature value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiniSplitEval {
    pub feature_index: usize,
    pub threshold: f64,
    pub gini_d: f64,
    pub gini_da: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `w_i ∝ ΔGini_i`.
    #[default]
    Proportional,
    /// `w_i ∝` the ascending rank of `ΔGini_i` (ties share their mean rank).
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub w: [f64; NUM_FEATURES],
}

impl FeatureWeights {
    pub fn uniform() -> Self {
        Self {
            w: [1.0 / NUM_FEATURES as f64; NUM_FEATURES],
        }
    }
}

/// Impurity from per-class counts. Shared by every split evaluation so the
/// same counts always produce bit-identical results.
fn impurity_from_counts(counts: &[usize], n: usize) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p
        })
        .sum::<f64>()
}

fn split_from_counts(left: &[usize], nl: usize, right: &[usize], nr: usize) -> f64 {
    let n = (nl + nr) as f64;
    let side = |counts: &[usize], m: usize| {
        if m == 0 {
            0.0
        } else {
            m as f64 / n * impurity_from_counts(counts, m)
        }
    };
    side(left, nl) + side(right, nr)
}

fn class_counts(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

pub fn gini_impurity(labels: &[usize]) -> Result<f64, GiniError> {
    if labels.is_empty() {
        return Err(GiniError::EmptySet);
    }
    Ok(impurity_from_counts(&class_counts(labels), labels.len()))
}

/// Weighted impurity of the split `{v ≤ threshold}`, `{v > threshold}`.
pub fn gini_index_split(values: &[f64], labels: &[usize], threshold: f64) -> Result<f64, GiniError> {
    check_inputs(values, labels)?;
    let k = class_counts(labels).len();
    let (mut left, mut right) = (vec![0; k], vec![0; k]);
    for (&v, &l) in values.iter().zip(labels) {
        if v <= threshold {
            left[l] += 1;
        } else {
            right[l] += 1;
        }
    }
    let nl = left.iter().sum();
    let nr = right.iter().sum();
    Ok(split_from_counts(&left, nl, &right, nr))
}

fn check_inputs(values: &[f64], labels: &[usize]) -> Result<(), GiniError> {
    if values.len() != labels.len() {
        return Err(GiniError::LengthMismatch {
            values: values.len(),
            labels: labels.len(),
        });
    }
    if values.len() < 2 {
        return Err(GiniError::TooFewSamples(values.len()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(GiniError::NonFinite(i));
    }
    Ok(())
}

/// Best binary split over midpoints of consecutive distinct values, ties to
/// the smallest threshold. A constant feature yields `delta = 0` at the
/// constant itself.
pub fn best_delta_gini(values: &[f64], labels: &[usize]) -> Result<GiniSplitEval, GiniError> {
    check_inputs(values, labels)?;
    let total = class_counts(labels);
    let n = labels.len();
    let gini_d = impurity_from_counts(&total, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut best = GiniSplitEval {
        feature_index: 0,
        threshold: values[order[0]],
        gini_d,
        gini_da: gini_d,
        delta: 0.0,
    };
    let mut found = false;
    let mut left = vec![0; total.len()];
    for i in 0..n - 1 {
        left[labels[order[i]]] += 1;
        let (a, b) = (values[order[i]], values[order[i + 1]]);
        if a == b {
            continue;
        }
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let gini_da = split_from_counts(&left, i + 1, &right, n - i - 1);
        let delta = gini_d - gini_da;
        if !found || delta > best.delta {
            found = true;
            best.threshold = 0.5 * (a + b);
            best.gini_da = gini_da;
            best.delta = delta;
        }
    }
    Ok(best)
}

pub fn feature_weights(evals: &[GiniSplitEval; NUM_FEATURES], weighting: Weighting) -> FeatureWeights {
    let deltas: Vec<f64> = evals.iter().map(|e| e.delta.max(0.0)).collect();
    let scores: Vec<f64> = match weighting {
        Weighting::Proportional => deltas,
        Weighting::Rank => deltas
            .iter()
            .map(|d| {
                let below = deltas.iter().filter(|o| *o < d).count() as f64;
                let tied = deltas.iter().filter(|o| *o == d).count() as f64;
                below + (tied + 1.0) / 2.0
            })
            .collect(),
    };
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return FeatureWeights::uniform();
    }
    let mut w = [0.0; NUM_FEATURES];
    for (wi, s) in w.iter_mut().zip(&scores) {
        *wi = s / total;
    }
    FeatureWeights { w }
}

pub fn apply_weights(f: &ShallowFeatureVector, w: &FeatureWeights) -> [f64; NUM_FEATURES] {
    let a = f.to_array();
    std::array::from_fn(|i| a[i] * w.w[i])
}

/// Per-feature best splits plus the resulting weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniReport {
    pub weighting: Weighting,
    pub features: Vec<GiniFeatureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniFeatureRow {
    pub name: String,
    pub threshold: f64,
    pub gini_d: f64,
    pub gini_da: f64,
    pub delta: f64,
    pub weight: f64,
}

impl GiniReport {
    pub fn weights(&self) -> FeatureWeights {
        let mut w = [0.0; NUM_FEATURES];
        for (wi, row) in w.iter_mut().zip(&self.features) {
            *wi = row.weight;
        }
        FeatureWeights { w }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("gini report serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }
}

/// Scores each column of `features` against `labels` and weights them.
pub fn fit_weights(
    features: &[ShallowFeatureVector],
    labels: &[usize],
    weighting: Weighting,
) -> Result<(GiniReport, FeatureWeights), GiniError> {
    let columns: Vec<[f64; NUM_FEATURES]> = features.iter().map(|f| f.to_array()).collect();
    let mut evals = [GiniSplitEval {
        feature_index: 0,
        threshold: 0.0,
        gini_d: 0.0,
        gini_da: 0.0,
        delta: 0.0,
    }; NUM_FEATURES];
    for (a, eval) in evals.iter_mut().enumerate() {
        let col: Vec<f64> = columns.iter().map(|c| c[a]).collect();
        *eval = best_delta_gini(&col, labels)?;
        eval.feature_index = a;
    }
    let weights = feature_weights(&evals, weighting);
    let report = GiniReport {
        weighting,
        features: evals
            .iter()
            .zip(weights.w)
            .map(|(e, w)| GiniFeatureRow {
                name: FEATURE_NAMES[e.feature_index].to_string(),
                threshold: e.threshold,
                gini_d: e.gini_d,
                gini_da: e.gini_da,
                delta: e.delta,
                weight: w,
            })
            .collect(),
    };
    Ok((report, weights))
}
