//! End-to-end run on planted synthetic flows: train, explain, rank, select,
//! retrain, score and write a run directory.
//!
//! `cargo run --release --example full_benchmark -- [out_dir] [n_samples]`

use xai_ids::benchmark::{emit_reports, run_experiment_matrix, scoring_by_k, weighted_scoring, DataSource, ExperimentConfig, KValue};
use xai_ids::flowdata::SynthSpec;

fn main() -> xai_ids::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out_dir = args.next().unwrap_or_else(|| "runs/full_benchmark".into());
    let n_samples = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);

    let mut cfg = ExperimentConfig {
        name: "synthetic".into(),
        k_values: vec![KValue::Count(5), KValue::Count(10), KValue::All],
        ..ExperimentConfig::default()
    };
    cfg.data.source = DataSource::Synth(SynthSpec {
        n_samples,
        n_features: 20,
        n_informative: 5,
        n_classes: 4,
        separation: 1.5,
        class_weights: Some(vec![4.0, 2.0, 1.0, 1.0]),
        seed: 7,
    });
    cfg.attribution.background = 20;
    cfg.attribution.explain_samples = 40;

    let out = run_experiment_matrix(&cfg)?;
    let methods = cfg.method_names();
    let mut boards = scoring_by_k(&out.rows, &methods)?;
    let mut overall = weighted_scoring(&out.rows, &methods)?;
    overall.label = "overall".into();
    boards.push(overall);
    for b in &boards {
        println!("{}", b.to_table());
    }
    let files = emit_reports(&out, &boards, &out_dir)?;
    println!("wrote {} files under {out_dir}", files.len());
    Ok(())
}
