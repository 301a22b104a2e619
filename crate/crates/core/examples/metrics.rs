//! The evaluation suite on hand-made predictions: confusion matrix, macro
//! metrics, one-vs-rest AUC, per-class accuracy and false-positive rate.

use ndarray::array;
use xai_ids::metrics::{
    auc_roc_ovr, classification_metrics, confusion, false_positive_rate, per_class_accuracy_with, MetricSet,
    PerClassMode, AVERAGING,
};

fn main() -> xai_ids::Result<()> {
    // class 0 is benign
    let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
    let probs = array![
        [0.9, 0.05, 0.05],
        [0.8, 0.1, 0.1],
        [0.3, 0.6, 0.1],
        [0.7, 0.2, 0.1],
        [0.1, 0.8, 0.1],
        [0.2, 0.7, 0.1],
        [0.5, 0.3, 0.2],
        [0.1, 0.1, 0.8],
        [0.2, 0.2, 0.6],
        [0.1, 0.5, 0.4],
    ];
    let pred: Vec<usize> = probs.outer_iter().map(|r| xai_ids::models::argmax(&r.to_vec())).collect();
    let cm = confusion(&truth, &pred, 3)?;
    println!("confusion (rows = truth):\n{}", cm.counts);

    let mut m = classification_metrics(&cm)?;
    m.aucroc = auc_roc_ovr(probs.view(), &truth)?.0;
    println!("averaging: {AVERAGING}");
    for (n, v) in MetricSet::NAMES.iter().zip(m.values()) {
        println!("  {n:>6} {v:.4}");
    }
    println!("benign false-positive rate {:.4}", false_positive_rate(&cm, 0)?);
    println!("one-vs-rest accuracy {:?}", per_class_accuracy_with(&cm, PerClassMode::OneVsRest));
    println!("per-class recall     {:?}", per_class_accuracy_with(&cm, PerClassMode::Recall));
    Ok(())
}
