//! Train every classifier family on the same split and compare them; save
//! and reload one artifact.

use xai_ids::benchmark::{default_models, measure_runtime};
use xai_ids::flowdata::{minmax_fit_apply, split_train_test, synth_planted, SplitSpec};
use xai_ids::metrics::{evaluate, false_positive_rate, per_class_accuracy};
use xai_ids::models::{train, TrainedModel};

fn main() -> xai_ids::Result<()> {
    let data = synth_planted(8000, 20, 5, 4, 3)?;
    let (tr, te) = split_train_test(&data, SplitSpec { train_fraction: 0.7, seed: 1 })?;
    let (tr, te, _) = minmax_fit_apply(&tr, &[&te])?;
    let te = &te[0];

    println!("{:<5} {:>7} {:>7} {:>7} {:>8} {:>8}  per-class accuracy", "model", "acc", "mcc", "fpr", "train_s", "test_s");
    for spec in default_models() {
        let (model, t_train) = measure_runtime(|| train(&spec.params, &tr, 7));
        let model = model?;
        let (probs, t_test) = measure_runtime(|| model.predict_proba(te.x.view()));
        let (m, cm) = evaluate(&te.y, probs?.view())?;
        let fpr = false_positive_rate(&cm, te.schema.normal_class())?;
        let pcs: Vec<String> = per_class_accuracy(&cm).iter().map(|a| format!("{a:.3}")).collect();
        println!(
            "{:<5} {:>7.4} {:>7.4} {:>7.4} {:>8.3} {:>8.3}  {}",
            spec.name, m.acc, m.mcc, fpr, t_train, t_test, pcs.join(" ")
        );
    }

    let rf = train(&default_models()[0].params, &tr, 7)?;
    let path = std::env::temp_dir().join("xai_ids_rf.model");
    rf.save(&path)?;
    let back = TrainedModel::load(&path)?;
    assert_eq!(back.predict_labels(te.x.view())?, rf.predict_labels(te.x.view())?);
    println!("artifact round trip ok: {}", path.display());
    Ok(())
}
