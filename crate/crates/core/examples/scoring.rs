//! The 3/2/1 weighted scoring system: placements per (model, k) cell with
//! the accuracy-first tie-break chain, and scores from published counts.

use xai_ids::benchmark::{scoring_by_k, weighted_scoring, KValue, PlaceCounts, ResultRow, ScoreBoard};
use xai_ids::metrics::MetricSet;

fn row(model: &str, method: &str, k: usize, acc: f64, prec: f64) -> ResultRow {
    ResultRow {
        model: model.into(),
        method: method.into(),
        k: KValue::Count(k),
        metrics: MetricSet::from_values([acc, prec, 0.9, 0.9, 0.9, 0.9, 0.9, 0.01]),
        per_class_accuracy: vec![],
        attack_fpr: 0.0,
        features: vec![],
        train_time_s: 0.0,
        test_time_s: 0.0,
        explain_time_s: 0.0,
    }
}

fn main() -> xai_ids::Result<()> {
    let methods: Vec<String> = ["overall_rank", "combined_selection", "chi2", "kbest"].iter().map(|s| s.to_string()).collect();
    let rows = vec![
        row("RF", "overall_rank", 5, 0.97, 0.95),
        row("RF", "combined_selection", 5, 0.98, 0.96),
        row("RF", "chi2", 5, 0.97, 0.96),
        row("RF", "kbest", 5, 0.90, 0.90),
        row("KNN", "overall_rank", 5, 0.93, 0.91),
        row("KNN", "combined_selection", 5, 0.95, 0.93),
        row("KNN", "chi2", 5, 0.91, 0.92),
        row("KNN", "kbest", 5, 0.95, 0.93),
        row("RF", "overall_rank", 10, 0.99, 0.98),
        row("RF", "combined_selection", 10, 0.99, 0.97),
        row("RF", "chi2", 10, 0.96, 0.96),
        row("RF", "kbest", 10, 0.95, 0.95),
    ];
    for b in scoring_by_k(&rows, &methods)? {
        println!("{}", b.to_table());
    }
    println!("{}", weighted_scoring(&rows, &methods)?.to_table());

    let published = ScoreBoard::from_counts(
        "published counts",
        &[
            ("Overall Normalized Weighted Rank", PlaceCounts::new(2, 0, 3)),
            ("Combined Selection", PlaceCounts::new(4, 1, 2)),
            ("Common Features by Overall Rank", PlaceCounts::new(1, 1, 1)),
        ],
    );
    println!("{}", published.to_table());
    Ok(())
}
