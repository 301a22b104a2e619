//! Evaluation metrics computed from a confusion matrix (plus ROC AUC from
//! class scores).
//!
//! Conventions: precision, recall and F1 are macro-averaged over all
//! classes of the matrix; a per-class ratio with a zero denominator
//! contributes 0 and is reported in [`MetricSet::flags`]. MCC is the
//! multiclass (Gorodkin) form.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AVERAGING: &str = "macro";

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::shape("square matrix", format!("{:?}", counts.dim())));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[[c, c]]
    }

    /// Predicted `c` but truly another class.
    pub fn fp(&self, c: usize) -> u64 {
        self.counts.column(c).sum() - self.tp(c)
    }

    pub fn fn_(&self, c: usize) -> u64 {
        self.counts.row(c).sum() - self.tp(c)
    }

    pub fn tn(&self, c: usize) -> u64 {
        self.total() - self.tp(c) - self.fp(c) - self.fn_(c)
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::shape(
            format!("{} predictions", truth.len()),
            format!("{} predictions", pred.len()),
        ));
    }
    let mut counts = Array2::<u64>::zeros((n_classes, n_classes));
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) out of range for {n_classes} classes"
            )));
        }
        counts[[t, p]] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
    pub bacc: f64,
    pub mcc: f64,
    pub aucroc: f64,
    pub fpr: f64,
    /// Degenerate ratios that were replaced by 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 8] = ["acc", "prec", "rec", "f1", "bacc", "mcc", "aucroc", "fpr"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.acc,
            self.prec,
            self.rec,
            self.f1,
            self.bacc,
            self.mcc,
            self.aucroc,
            self.fpr,
        ]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        MetricSet {
            acc: v[0],
            prec: v[1],
            rec: v[2],
            f1: v[3],
            bacc: v[4],
            mcc: v[5],
            aucroc: v[6],
            fpr: v[7],
            flags: Vec::new(),
        }
    }
}

fn ratio(num: u64, den: u64, what: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(what.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Every metric except `aucroc` (left at 0; see [`auc_roc_ovr`]).
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricSet> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let k = cm.n_classes();
    let mut flags = Vec::new();
    let (mut prec, mut rec, mut f1, mut fpr) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..k {
        let (tp, fp, fneg, tn) = (cm.tp(c), cm.fp(c), cm.fn_(c), cm.tn(c));
        let p = ratio(tp, tp + fp, &format!("precision undefined for class {c}"), &mut flags);
        let r = ratio(tp, tp + fneg, &format!("recall undefined for class {c}"), &mut flags);
        prec += p;
        rec += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        fpr += ratio(fp, fp + tn, &format!("fpr undefined for class {c}"), &mut flags);
    }
    let kf = k as f64;
    let trace: u64 = (0..k).map(|c| cm.tp(c)).sum();
    let acc = trace as f64 / total as f64;

    let s = total as f64;
    let pred_tot: Vec<f64> = (0..k).map(|c| cm.counts.column(c).sum() as f64).collect();
    let true_tot: Vec<f64> = (0..k).map(|c| cm.counts.row(c).sum() as f64).collect();
    let cov_xy = trace as f64 * s - pred_tot.iter().zip(&true_tot).map(|(p, t)| p * t).sum::<f64>();
    let cov_xx = s * s - pred_tot.iter().map(|p| p * p).sum::<f64>();
    let cov_yy = s * s - true_tot.iter().map(|t| t * t).sum::<f64>();
    let mcc = if cov_xx > 0.0 && cov_yy > 0.0 {
        (cov_xy / (cov_xx * cov_yy).sqrt()).clamp(-1.0, 1.0)
    } else {
        flags.push("mcc undefined (single predicted or true class)".into());
        0.0
    };

    Ok(MetricSet {
        acc,
        prec: prec / kf,
        rec: rec / kf,
        f1: f1 / kf,
        bacc: rec / kf,
        mcc,
        aucroc: 0.0,
        fpr: fpr / kf,
        flags,
    })
}

/// Midranks (1-based) of `scores`, ties sharing the mean of their ranks.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Binary ROC AUC via the Mann-Whitney rank statistic.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest AUC, macro-averaged over classes that occur in `truth`
/// (and do not make up all of it). Skipped classes are returned as flags.
pub fn auc_roc_ovr(probs: ArrayView2<f64>, truth: &[usize]) -> Result<(f64, Vec<String>)> {
    if probs.nrows() != truth.len() {
        return Err(Error::shape(
            format!("{} score rows", truth.len()),
            format!("{} rows", probs.nrows()),
        ));
    }
    let mut flags = Vec::new();
    let mut aucs = Vec::new();
    for c in 0..probs.ncols() {
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let scores: Vec<f64> = probs.column(c).to_vec();
        match auc_binary(&scores, &positive) {
            Some(a) => aucs.push(a),
            None => flags.push(format!("auc skipped for class {c} (no positives or negatives)")),
        }
    }
    if aucs.is_empty() {
        return Err(Error::InvalidArgument("AUC needs at least two classes in the labels".into()));
    }
    Ok((aucs.iter().sum::<f64>() / aucs.len() as f64, flags))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerClassMode {
    /// `(TP_c + TN_c) / total`
    #[default]
    OneVsRest,
    /// `TP_c / (TP_c + FN_c)`
    Recall,
}

pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Vec<f64> {
    per_class_accuracy_with(cm, PerClassMode::OneVsRest)
}

pub fn per_class_accuracy_with(cm: &ConfusionMatrix, mode: PerClassMode) -> Vec<f64> {
    let total = cm.total();
    (0..cm.n_classes())
        .map(|c| match mode {
            PerClassMode::OneVsRest if total > 0 => (cm.tp(c) + cm.tn(c)) as f64 / total as f64,
            PerClassMode::OneVsRest => 0.0,
            PerClassMode::Recall => {
                let den = cm.tp(c) + cm.fn_(c);
                if den == 0 {
                    0.0
                } else {
                    cm.tp(c) as f64 / den as f64
                }
            }
        })
        .collect()
}

/// Share of truly benign samples flagged as any attack class.
pub fn false_positive_rate(cm: &ConfusionMatrix, normal_class: usize) -> Result<f64> {
    if normal_class >= cm.n_classes() {
        return Err(Error::InvalidArgument(format!("normal class {normal_class} out of range")));
    }
    let normals = cm.counts.row(normal_class).sum();
    if normals == 0 {
        return Err(Error::InvalidArgument("no normal samples to compute FPR".into()));
    }
    Ok((normals - cm.tp(normal_class)) as f64 / normals as f64)
}

/// Full metric set from labels and class scores.
pub fn evaluate(truth: &[usize], probs: ArrayView2<f64>) -> Result<(MetricSet, ConfusionMatrix)> {
    let pred: Vec<usize> = probs
        .outer_iter()
        .map(|r| crate::models::argmax(&r.to_vec()))
        .collect();
    let cm = confusion(truth, &pred, probs.ncols())?;
    let mut m = classification_metrics(&cm)?;
    let (auc, flags) = auc_roc_ovr(probs, truth)?;
    m.aucroc = auc;
    m.flags.extend(flags);
    Ok((m, cm))
}
