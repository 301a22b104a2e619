//! The six aggregation methods and rank voting on hand-written per-model
//! importances.

use ndarray::{array, Array2};
use xai_ids::attribution::GlobalImportance;
use xai_ids::ranking::{
    combined_selection, models_attacks_score, normalized_weighted_rank, overall_rank, voting, weighted_rank,
    FeatureRanking, RankContext,
};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn show(r: &FeatureRanking) {
    let cells: Vec<String> = r.entries.iter().map(|(j, s)| format!("{}({s:.3})", r.feature_names[*j])).collect();
    println!("{:<26} {}", r.method, cells.join("  "));
}

fn main() -> xai_ids::Result<()> {
    let features = names(&["dst_port", "flow_duration", "fwd_pkts", "bwd_bytes", "syn_flags"]);
    let classes = names(&["Normal", "DoS", "PortScan"]);
    let imp = |rows: Array2<f64>| GlobalImportance::new("kernel-shap", classes.clone(), features.clone(), rows);
    let rf = imp(array![[0.30, 0.10, 0.05, 0.02, 0.01], [0.20, 0.40, 0.10, 0.05, 0.02], [0.50, 0.05, 0.02, 0.01, 0.30]]);
    let knn = imp(array![[0.10, 0.20, 0.30, 0.05, 0.01], [0.05, 0.50, 0.20, 0.10, 0.02], [0.40, 0.10, 0.05, 0.02, 0.20]]);
    let dnn = imp(array![[0.20, 0.05, 0.10, 0.30, 0.02], [0.10, 0.30, 0.05, 0.20, 0.01], [0.60, 0.02, 0.01, 0.05, 0.10]]);
    let ctx = RankContext::from_importances(&[("RF".into(), 0.99, &rf), ("KNN".into(), 0.95, &knn), ("DNN".into(), 0.90, &dnn)])?;

    for m in 0..ctx.models.len() {
        show(&ctx.model_ranking(m));
    }
    let common = [overall_rank(&ctx)?, weighted_rank(&ctx)?, normalized_weighted_rank(&ctx)?, models_attacks_score(&ctx)?];
    for r in &common {
        show(r);
    }
    let mut inputs = common.to_vec();
    inputs.extend((0..ctx.models.len()).map(|m| ctx.model_ranking(m)));
    show(&combined_selection(&inputs, 3)?);
    show(&voting(&common)?);
    Ok(())
}
