//! Experiment orchestration: configuration, the train / explain / rank /
//! retrain grid, the 3-2-1 scoring system and report emission.

mod config;
mod pipeline;
mod report;
mod scoring;

pub use config::{
    default_k_values, default_models, AttributionBudget, DataConfig, DataSource, ExperimentConfig, KValue,
    MethodsConfig, ModelSpec, VOTING,
};
pub use pipeline::{
    load_source, measure_runtime, prepare, prepare_dataset, run_experiment_matrix, run_on_prepared, ranking_stage,
    ExperimentOutput, Prepared, RankingStage, ResultRow, ALL_FEATURES,
};
pub use report::{
    emit_reports, file_stem, metrics_tables, read_metrics_csv, run_benchmark, score_rows, write_boards, write_metrics_csv,
    METRICS_HEADER,
};
pub use scoring::{scoring_by_k, weighted_scoring, PlaceCounts, ScoreBoard, PLACE_POINTS};
