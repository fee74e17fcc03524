//! Scoring, false-alarm-rate threshold calibration, decisions and the
//! confusion-matrix metrics. The positive class is the target.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataio::Label;
use crate::model::{classify, project, softmax_rows, ModelParams};
use crate::trainer::{encode_all, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("preset P_fa {0} outside (0, 1)")]
    InvalidPfa(f64),
    #[error("non-finite calibration score at index {0}")]
    NonFiniteScore(usize),
    #[error("{truth} true labels but {decisions} decisions")]
    LengthMismatch { truth: usize, decisions: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThreshold {
    pub threshold: f64,
    pub preset_pfa: f64,
    pub n_calibration: usize,
}

impl DetectionThreshold {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("threshold serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall_pd: f64,
    pub true_pfa: f64,
    pub miou: f64,
}

/// Target-class probability for each segment.
pub fn score(params: &ModelParams, segments: &[Vec<Complex64>]) -> Result<Vec<f64>, TrainError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let reprs = encode_all(params, segments)?;
    let probs = softmax_rows(&classify(&project(&reprs, params)?, params)?);
    Ok((0..probs.rows()).map(|r| probs.row(r)[Label::Target.class_id()]).collect())
}

/// Threshold letting through `floor(pfa·M)` of the clutter-only scores.
///
/// With `k = 0` the threshold sits just above the maximum. Otherwise it is
/// the midpoint of the k-th and (k+1)-th largest scores, or the k-th largest
/// itself when those two are equal (then at most k exceed it).
pub fn calibrate_threshold(clutter_scores: &[f64], preset_pfa: f64) -> Result<DetectionThreshold, DetectError> {
    if clutter_scores.is_empty() {
        return Err(DetectError::EmptyCalibrationSet);
    }
    if !(preset_pfa > 0.0 && preset_pfa < 1.0) {
        return Err(DetectError::InvalidPfa(preset_pfa));
    }
    if let Some(i) = clutter_scores.iter().position(|s| !s.is_finite()) {
        return Err(DetectError::NonFiniteScore(i));
    }
    let m = clutter_scores.len();
    let needed = (1.0 / preset_pfa).ceil() as usize;
    if m < needed {
        log::warn!("calibrating P_fa {preset_pfa} on only {m} scores (fewer than {needed})");
    }
    let mut sorted = clutter_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = (preset_pfa * m as f64).floor() as usize;
    let threshold = if k == 0 {
        sorted[0] + 1e-9
    } else if sorted[k - 1] == sorted[k] {
        sorted[k - 1]
    } else {
        0.5 * (sorted[k - 1] + sorted[k])
    };
    Ok(DetectionThreshold {
        threshold,
        preset_pfa,
        n_calibration: m,
    })
}

pub fn decide(score: f64, th: &DetectionThreshold) -> Label {
    if score > th.threshold {
        Label::Target
    } else {
        Label::Clutter
    }
}

pub fn confusion(truth: &[Label], decisions: &[Label]) -> Result<ConfusionMatrix, DetectError> {
    if truth.len() != decisions.len() {
        return Err(DetectError::LengthMismatch {
            truth: truth.len(),
            decisions: decisions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (t, d) in truth.iter().zip(decisions) {
        match (t, d) {
            (Label::Target, Label::Target) => cm.tp += 1,
            (Label::Target, Label::Clutter) => cm.fn_ += 1,
            (Label::Clutter, Label::Target) => cm.fp += 1,
            (Label::Clutter, Label::Clutter) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The five confusion-matrix metrics. Each is a single rounding of its
/// exact rational value; an empty denominator gives 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, DetectError> {
    let total = cm.total();
    if total == 0 {
        return Err(DetectError::EmptyMatrix);
    }
    let ConfusionMatrix { tp, fn_, fp, tn } = *cm;
    // ½(a/b + c/d) = (a·d + c·b) / (2·b·d), kept in integers
    let (a, b, c, d) = (tp as u128, (tp + fn_ + fp) as u128, tn as u128, (tn + fn_ + fp) as u128);
    let miou = match (b, d) {
        (0, 0) => 0.0,
        (0, _) => c as f64 / (2 * d) as f64,
        (_, 0) => a as f64 / (2 * b) as f64,
        _ => (a * d + c * b) as f64 / (2 * b * d) as f64,
    };
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, total),
        precision: ratio(tp, tp + fp),
        recall_pd: ratio(tp, tp + fn_),
        true_pfa: ratio(fp, fp + tn),
        miou,
    })
}

/// Everything `evaluate` reports about one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: DetectionThreshold,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

impl EvaluationReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }
}

pub fn evaluate(scores: &[f64], truth: &[Label], th: DetectionThreshold) -> Result<EvaluationReport, DetectError> {
    let decisions: Vec<Label> = scores.iter().map(|&s| decide(s, &th)).collect();
    let confusion = confusion(truth, &decisions)?;
    Ok(EvaluationReport {
        threshold: th,
        confusion,
        metrics: metrics(&confusion)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;
    use rand::Rng;

    fn th(t: f64) -> DetectionThreshold {
        DetectionThreshold {
            threshold: t,
            preset_pfa: 0.01,
            n_calibration: 100,
        }
    }

    #[test]
    fn calibration_examples() {
        let s: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let t = calibrate_threshold(&s, 0.2).unwrap();
        assert_eq!(t.threshold, 0.5 * (0.9 + 0.8));
        assert_eq!(s.iter().filter(|&&x| x > t.threshold).count(), 2);
        let t = calibrate_threshold(&s, 0.05).unwrap();
        assert_eq!(t.threshold, 1.0 + 1e-9);
        assert!(s.iter().all(|&x| decide(x, &t) == Label::Clutter));
        assert_eq!(calibrate_threshold(&[], 0.1), Err(DetectError::EmptyCalibrationSet));
        assert!(calibrate_threshold(&s, 1.0).is_err());
    }

    #[test]
    fn calibration_with_ties() {
        let s = [0.9, 0.5, 0.5, 0.5, 0.1];
        let t = calibrate_threshold(&s, 0.4).unwrap();
        assert_eq!(t.threshold, 0.5);
        assert!(s.iter().filter(|&&x| x > t.threshold).count() <= 2);
    }

    #[test]
    fn calibration_on_uniform_scores() {
        let mut rng = rng_for(11, &[]);
        let s: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t = calibrate_threshold(&s, 0.01).unwrap();
        assert!((t.threshold - 0.99).abs() <= 0.01);
        assert_eq!(s.iter().filter(|&&x| x > t.threshold).count(), 100);
    }

    #[test]
    fn decide_boundary_and_monotone() {
        assert_eq!(decide(0.4, &th(0.4)), Label::Clutter);
        assert_eq!(decide(1.0, &th(0.999)), Label::Target);
        for s in [0.1, 0.5, 0.9] {
            let mut prev = decide(s, &th(0.0));
            for t in [0.2, 0.4, 0.6, 0.8, 1.0] {
                let now = decide(s, &th(t));
                assert!(!(prev == Label::Clutter && now == Label::Target));
                prev = now;
            }
        }
    }

    #[test]
    fn confusion_examples() {
        use Label::*;
        let truth: Vec<Label> = [vec![Target; 10], vec![Clutter; 10]].concat();
        let cm = confusion(&truth, &truth).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 10, fn_: 0, fp: 0, tn: 10 });
        let inv: Vec<Label> = truth.iter().map(|l| if *l == Target { Clutter } else { Target }).collect();
        assert_eq!(confusion(&truth, &inv).unwrap(), ConfusionMatrix { tp: 0, fn_: 10, fp: 10, tn: 0 });
        let t6 = [Target, Target, Target, Clutter, Clutter, Clutter];
        let d6 = [Target, Clutter, Target, Target, Clutter, Clutter];
        assert_eq!(confusion(&t6, &d6).unwrap(), ConfusionMatrix { tp: 2, fn_: 1, fp: 1, tn: 2 });
        assert!(confusion(&t6, &d6[..5]).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix { tp: 90, fn_: 10, fp: 5, tn: 95 }).unwrap();
        assert_eq!(m.accuracy, 0.925);
        assert!((m.precision - 0.9474).abs() < 1e-4);
        assert_eq!(m.recall_pd, 0.9);
        assert_eq!(m.true_pfa, 0.05);
        assert!((m.miou - 0.5 * (90.0 / 105.0 + 95.0 / 110.0)).abs() < 1e-15);
        assert!((m.miou - 0.8604).abs() < 1e-4);
        let p = metrics(&ConfusionMatrix { tp: 7, fn_: 0, fp: 0, tn: 3 }).unwrap();
        assert_eq!([p.accuracy, p.precision, p.recall_pd, p.true_pfa, p.miou], [1.0, 1.0, 1.0, 0.0, 1.0]);
        let q = metrics(&ConfusionMatrix { tp: 25, fn_: 25, fp: 25, tn: 25 }).unwrap();
        assert_eq!((q.accuracy, q.true_pfa), (0.5, 0.5));
        assert!((q.miou - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(metrics(&ConfusionMatrix::default()), Err(DetectError::EmptyMatrix));
        let z = metrics(&ConfusionMatrix { tp: 0, fn_: 0, fp: 0, tn: 4 }).unwrap();
        assert_eq!((z.precision, z.recall_pd, z.miou), (0.0, 0.0, 0.5));
    }

    #[test]
    fn report_round_trip() {
        let r = evaluate(&[0.9, 0.2, 0.7], &[Label::Target, Label::Clutter, Label::Clutter], th(0.5)).unwrap();
        assert_eq!(r.confusion, ConfusionMatrix { tp: 1, fn_: 0, fp: 1, tn: 1 });
        assert_eq!(EvaluationReport::from_toml(&r.to_toml()).unwrap(), r);
    }
}
