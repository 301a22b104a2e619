//! Flow CSV ingestion and the preprocessing chain: schema inference,
//! deduplication, stratified 70/30 split, random oversampling and min-max
//! scaling fitted on the training split.

use xai_ids::flowdata::{
    deduplicate_and_shuffle, infer_schema, load_csv, minmax_fit_apply, oversample_random, split_train_test,
    write_dataset_csv, NonFinitePolicy, PreprocessReport, SplitSpec, SynthSpec,
};

fn main() -> xai_ids::Result<()> {
    let dir = std::env::temp_dir().join("xai_ids_preprocessing");
    std::fs::create_dir_all(&dir).map_err(|e| xai_ids::Error::Input(e.to_string()))?;
    let csv = dir.join("flows.csv");

    // an imbalanced planted dataset stands in for a capture-day CSV
    let spec = SynthSpec {
        n_samples: 5000,
        n_features: 12,
        n_informative: 4,
        n_classes: 4,
        separation: 1.5,
        class_weights: Some(vec![10.0, 4.0, 1.0, 0.5]),
        seed: 11,
    };
    write_dataset_csv(&spec.generate()?, &csv)?;

    let schema = infer_schema(&csv, "label")?;
    println!("schema:\n{}", schema.to_text());
    let (data, mut report) = load_csv(&csv, &schema, NonFinitePolicy::DropRow)?;

    let (data, removed) = deduplicate_and_shuffle(&data, 1);
    report.duplicates_removed = removed;
    let (train, test) = split_train_test(&data, SplitSpec { train_fraction: 0.7, seed: 2 })?;
    report.per_class_counts_before_oversample = PreprocessReport::record_class_counts(&train);
    let train = oversample_random(&train, 3)?;
    report.per_class_counts_after_oversample = PreprocessReport::record_class_counts(&train);
    let (train, scaled, params) = minmax_fit_apply(&train, &[&test])?;

    let mut text = Vec::new();
    report.write_text(&mut text).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&text));
    println!("train {} rows, test {} rows", train.n_samples(), scaled[0].n_samples());
    println!("feature 0 fitted range [{:.3}, {:.3}]", params.mins[0], params.maxs[0]);
    Ok(())
}
