//! Classification scores: confusion counts, precision/recall/F1/accuracy and
//! ROC AUC (binary, micro and macro one-vs-rest).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        check_lengths(y_true.len(), y_pred.len())?;
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidArgument("class id out of range".into()));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    /// (TP, FP, FN) treating `class` as positive.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64) {
        let tp = self.counts[class][class];
        let fp = (0..self.n_classes).map(|t| self.counts[t][class]).sum::<u64>() - tp;
        let fn_ = self.counts[class].iter().sum::<u64>() - tp;
        (tp, fp, fn_)
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: "label vectors".into(),
            expected: a,
            found: b,
        });
    }
    if a == 0 {
        return Err(Error::InvalidArgument("empty label vectors".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A zero denominator forced one of the scores to 0.
    pub undefined: bool,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_scores(tp: u64, fp: u64, fn_: u64) -> ClassScores {
    let mut undefined = false;
    let precision = ratio(tp, tp + fp, &mut undefined);
    let recall = ratio(tp, tp + fn_, &mut undefined);
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_, &mut undefined);
    ClassScores {
        precision,
        recall,
        f1,
        undefined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: bool,
}

/// Precision, recall and F1 of `positive` plus overall accuracy.
pub fn precision_recall_f1_accuracy(y_true: &[usize], y_pred: &[usize], positive: usize) -> Result<LabelScores> {
    check_lengths(y_true.len(), y_pred.len())?;
    let n_classes = y_true.iter().chain(y_pred).copied().max().unwrap_or(0).max(positive) + 1;
    let cm = ConfusionMatrix::from_labels(y_true, y_pred, n_classes)?;
    let (tp, fp, fn_) = cm.one_vs_rest(positive);
    let s = class_scores(tp, fp, fn_);
    Ok(LabelScores {
        accuracy: cm.correct() as f64 / cm.total() as f64,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        undefined: s.undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Threshold-swept ROC with tied scores stepping together, and its
/// trapezoidal area. The first point is `(0, 0)` at threshold `+inf`.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            context: "ROC inputs".into(),
            expected: scores.len(),
            found: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ROC scores".into()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2 = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Twice the trapezoid in count units keeps the sum exact.
        area2 += ((fp - prev_fp) as u128) * ((tp + prev_tp) as u128);
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    let auc = area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucAverage {
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub auc: f64,
    /// Per-class one-vs-rest AUC; `None` when the class is absent or is the
    /// only class present.
    pub per_class: Vec<Option<f64>>,
    /// Some class was excluded from a macro mean.
    pub excluded_classes: bool,
}

fn binarized(probs: &[f64], n_classes: usize, y: &[usize], class: usize) -> (Vec<f64>, Vec<bool>) {
    let scores = (0..y.len()).map(|i| probs[i * n_classes + class]).collect();
    let labels = y.iter().map(|&t| t == class).collect();
    (scores, labels)
}

/// Micro or macro one-vs-rest AUC of a row-major `n x n_classes` probability
/// matrix. Two classes reduce to the binary AUC of class 1.
pub fn multiclass_auc(probs: &[f64], n_classes: usize, y_true: &[usize], mode: AucAverage) -> Result<MulticlassAuc> {
    if n_classes < 2 || probs.len() != y_true.len() * n_classes {
        return Err(Error::DimensionMismatch {
            context: "probability matrix".into(),
            expected: y_true.len() * n_classes,
            found: probs.len(),
        });
    }
    if y_true.iter().any(|&c| c >= n_classes) {
        return Err(Error::InvalidArgument("class id out of range".into()));
    }
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let (s, l) = binarized(probs, n_classes, y_true, c);
            roc_auc(&s, &l).ok().map(|r| r.auc)
        })
        .collect();
    if n_classes == 2 {
        let auc = per_class[1].ok_or_else(|| Error::Undefined("AUC needs both classes".into()))?;
        return Ok(MulticlassAuc {
            auc,
            per_class,
            excluded_classes: false,
        });
    }
    match mode {
        AucAverage::Micro => Ok(MulticlassAuc {
            auc: micro_roc(probs, n_classes, y_true)?.auc,
            per_class,
            excluded_classes: false,
        }),
        AucAverage::Macro => {
            let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
            if defined.is_empty() {
                return Err(Error::Undefined("no class has a defined AUC".into()));
            }
            Ok(MulticlassAuc {
                auc: defined.iter().sum::<f64>() / defined.len() as f64,
                excluded_classes: defined.len() < n_classes,
                per_class,
            })
        }
    }
}

/// ROC over all binarized (sample, class) pairs; for two classes, the
/// binary ROC of class 1.
pub fn micro_roc(probs: &[f64], n_classes: usize, y_true: &[usize]) -> Result<RocCurve> {
    if n_classes == 2 {
        let (s, l) = binarized(probs, 2, y_true, 1);
        return roc_auc(&s, &l);
    }
    let mut scores = Vec::with_capacity(probs.len());
    let mut labels = Vec::with_capacity(probs.len());
    for (i, &t) in y_true.iter().enumerate() {
        for c in 0..n_classes {
            scores.push(probs[i * n_classes + c]);
            labels.push(t == c);
        }
    }
    roc_auc(&scores, &labels)
}

/// Scores of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_samples: usize,
    pub accuracy: f64,
    /// Binary: of class 1. Multiclass: unweighted mean over classes.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
    pub auc_micro: Option<f64>,
    pub auc_macro: Option<f64>,
    pub auc_per_class: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub flags: Vec<String>,
}

/// Argmax with ties to the lower class id.
pub fn argmax_rows(probs: &[f64], n_classes: usize) -> Vec<usize> {
    probs
        .chunks(n_classes)
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

impl MetricReport {
    pub fn from_probabilities(probs: &[f64], n_classes: usize, y_true: &[usize]) -> Result<Self> {
        let y_pred = argmax_rows(probs, n_classes);
        let confusion = ConfusionMatrix::from_labels(y_true, &y_pred, n_classes)?;
        let per_class: Vec<ClassScores> = (0..n_classes)
            .map(|c| {
                let (tp, fp, fn_) = confusion.one_vs_rest(c);
                class_scores(tp, fp, fn_)
            })
            .collect();
        let mut flags = Vec::new();
        let (precision, recall, f1, undefined) = if n_classes == 2 {
            let s = per_class[1];
            (s.precision, s.recall, s.f1, s.undefined)
        } else {
            let k = n_classes as f64;
            (
                per_class.iter().map(|s| s.precision).sum::<f64>() / k,
                per_class.iter().map(|s| s.recall).sum::<f64>() / k,
                per_class.iter().map(|s| s.f1).sum::<f64>() / k,
                per_class.iter().any(|s| s.undefined),
            )
        };
        if undefined {
            flags.push("zero_denominator".into());
        }
        let micro = multiclass_auc(probs, n_classes, y_true, AucAverage::Micro);
        let macro_ = multiclass_auc(probs, n_classes, y_true, AucAverage::Macro);
        let auc_per_class = match &macro_ {
            Ok(m) => m.per_class.clone(),
            Err(_) => vec![None; n_classes],
        };
        if micro.is_err() {
            flags.push("auc_undefined".into());
        }
        if matches!(&macro_, Ok(m) if m.excluded_classes) {
            flags.push("macro_auc_class_excluded".into());
        }
        Ok(MetricReport {
            n_samples: y_true.len(),
            accuracy: confusion.correct() as f64 / confusion.total() as f64,
            precision,
            recall,
            f1,
            per_class,
            auc_micro: micro.ok().map(|m| m.auc),
            auc_macro: macro_.ok().map(|m| m.auc),
            auc_per_class,
            confusion,
            flags,
        })
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::AucMicro => self.auc_micro,
            Metric::AucMacro => self.auc_macro,
            Metric::Accuracy => Some(self.accuracy),
            Metric::F1 => Some(self.f1),
        }
    }
}

/// Stage objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AucMicro,
    AucMacro,
    Accuracy,
    F1,
}
