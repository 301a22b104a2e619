use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use log::info;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, KValue, ModelSpec, VOTING};
use crate::attribution::{self, pick_rows, BackgroundSet, GlobalImportance, Method};
use crate::error::{Error, Result};
use crate::flowdata::{
    deduplicate_and_shuffle, infer_schema_files, load_csv_files, minmax_fit_apply, oversample_random, split_train_test,
    stratified_subsample, Dataset, FeatureSchema, PreprocessReport, SplitSpec,
};
use crate::metrics::{self, false_positive_rate, per_class_accuracy, MetricSet};
use crate::models::{train, TrainedModel};
use crate::ranking::{
    baseline_rank, combined_selection, models_attacks_score, normalized_weighted_rank, overall_rank,
    rank_from_importance, select_top_k, voting, weighted_rank, Aggregation, FeatureRanking, RankContext,
};
use crate::seed;

/// Wall-clock seconds of `f` on a monotonic clock.
pub fn measure_runtime<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Train / test splits after the full preprocessing chain.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub report: PreprocessReport,
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<(Dataset, PreprocessReport)> {
    match &cfg.data.source {
        DataSource::Synth(spec) => {
            let d = spec.generate()?;
            let report = PreprocessReport {
                rows_in: d.n_samples(),
                ..PreprocessReport::default()
            };
            Ok((d, report))
        }
        DataSource::Csv {
            paths,
            schema,
            label_column,
        } => {
            if paths.is_empty() {
                return Err(Error::Config("csv source needs at least one path".into()));
            }
            let schema = match schema {
                Some(p) => FeatureSchema::load(p)?,
                None => infer_schema_files(paths, label_column.as_deref().unwrap_or("label"))?,
            };
            load_csv_files(paths, &schema, cfg.data.nonfinite)
        }
    }
}

/// Load (or generate), subsample, deduplicate, split, oversample the
/// training split and min-max scale both splits with training statistics.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (data, report) = load_source(cfg)?;
    prepare_dataset(cfg, data, report)
}

pub fn prepare_dataset(cfg: &ExperimentConfig, data: Dataset, mut report: PreprocessReport) -> Result<Prepared> {
    let s = cfg.seed;
    let data = match cfg.data.subsample {
        Some(n) => stratified_subsample(&data, n, seed::derive_tag(s, "subsample")),
        None => data,
    };
    let (data, removed) = deduplicate_and_shuffle(&data, seed::derive_tag(s, "shuffle"));
    report.duplicates_removed = removed;
    let (train, test) = split_train_test(
        &data,
        SplitSpec {
            train_fraction: cfg.data.train_fraction,
            seed: seed::derive_tag(s, "split"),
        },
    )?;
    report.per_class_counts_before_oversample = PreprocessReport::record_class_counts(&train);
    let train = if cfg.data.oversample {
        oversample_random(&train, seed::derive_tag(s, "oversample"))?
    } else {
        train
    };
    report.per_class_counts_after_oversample = PreprocessReport::record_class_counts(&train);
    let (train, others, params) = minmax_fit_apply(&train, &[&test])?;
    report.minmax_params = train
        .schema
        .feature_names
        .iter()
        .zip(params.mins.iter().zip(&params.maxs))
        .map(|(n, (lo, hi))| (n.clone(), *lo, *hi))
        .collect();
    let test = others.into_iter().next().expect("one test split");
    Ok(Prepared { train, test, report })
}

/// One (model, method, k) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub method: String,
    pub k: KValue,
    pub metrics: MetricSet,
    pub per_class_accuracy: Vec<f64>,
    /// Share of benign test flows flagged as attacks.
    pub attack_fpr: f64,
    pub features: Vec<String>,
    pub train_time_s: f64,
    pub test_time_s: f64,
    pub explain_time_s: f64,
}

pub const ALL_FEATURES: &str = "all_features";

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub report: PreprocessReport,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub rows: Vec<ResultRow>,
    /// Every ranking by name (selection methods, per-model rankings,
    /// per-method attribution rankings).
    pub rankings: BTreeMap<String, FeatureRanking>,
    /// Global importance of every explained model (and attribution method
    /// on the neural network).
    pub importances: BTreeMap<String, GlobalImportance>,
    pub models: BTreeMap<String, TrainedModel>,
    pub explain_times: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
struct Evaluated {
    metrics: MetricSet,
    per_class: Vec<f64>,
    attack_fpr: f64,
    train_time_s: f64,
    test_time_s: f64,
}

fn fit_and_evaluate(spec: &ModelSpec, train_d: &Dataset, test_d: &Dataset, seed: u64) -> Result<(TrainedModel, Evaluated)> {
    let (model, train_time_s) = measure_runtime(|| train(&spec.params, train_d, seed));
    let model = model?;
    let (probs, test_time_s) = measure_runtime(|| model.predict_proba(test_d.x.view()));
    let probs = probs?;
    let (metrics, cm) = metrics::evaluate(&test_d.y, probs.view())?;
    let attack_fpr = false_positive_rate(&cm, test_d.schema.normal_class())?;
    Ok((
        model,
        Evaluated {
            metrics,
            per_class: per_class_accuracy(&cm),
            attack_fpr,
            train_time_s,
            test_time_s,
        },
    ))
}

fn model_seed(master: u64, name: &str) -> u64 {
    seed::derive_tag(master, &format!("train/{name}"))
}

/// Full workflow: train on all features, explain, rank, select top-k,
/// retrain and evaluate every model on every subset.
pub fn run_experiment_matrix(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(cfg)?;
    run_on_prepared(cfg, prepared)
}
/// Full-feature models, their explanations and every k-independent ranking.
#[derive(Debug, Clone)]
pub struct RankingStage {
    pub models: BTreeMap<String, TrainedModel>,
    full_eval: HashMap<String, Evaluated>,
    pub importances: BTreeMap<String, GlobalImportance>,
    pub explain_times: BTreeMap<String, f64>,
    pub rankings: BTreeMap<String, FeatureRanking>,
    /// The four common aggregations (inputs to combined selection).
    pub common: Vec<FeatureRanking>,
    pub model_specific: BTreeMap<String, FeatureRanking>,
}

impl RankingStage {
    /// Test accuracy of a full-feature model.
    pub fn accuracy(&self, model: &str) -> Option<f64> {
        self.full_eval.get(model).map(|e| e.metrics.acc)
    }

    /// Ranking used for `method` at selection size `k`.
    pub fn ranking_for(&self, method: &str, model: &str, k: usize) -> Result<FeatureRanking> {
        if method == Aggregation::ModelSpecific.name() {
            return self
                .model_specific
                .get(model)
                .cloned()
                .ok_or_else(|| Error::Config(format!("no model-specific ranking for `{model}`")));
        }
        if method == Aggregation::CombinedSelection.name() {
            let mut inputs = self.common.clone();
            inputs.extend(self.model_specific.values().cloned());
            let mut r = combined_selection(&inputs, k)?;
            r.method = format!("{}_k{k}", Aggregation::CombinedSelection);
            return Ok(r);
        }
        self.rankings
            .get(method)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no ranking for method `{method}`")))
    }
}

/// Train every configured model on all features, explain them and build
/// the rankings the configured methods need.
pub fn ranking_stage(cfg: &ExperimentConfig, tr: &Dataset, te: &Dataset) -> Result<RankingStage> {
    let d = tr.n_features();
    let feature_names = &tr.schema.feature_names;

    let mut models = BTreeMap::new();
    let mut full_eval: HashMap<String, Evaluated> = HashMap::new();
    for spec in &cfg.models {
        info!("training {} on all features", spec.name);
        let (m, ev) = fit_and_evaluate(spec, tr, te, model_seed(cfg.seed, &spec.name))?;
        models.insert(spec.name.clone(), m);
        full_eval.insert(spec.name.clone(), ev);
    }

    let mut importances = BTreeMap::new();
    let mut explain_times = BTreeMap::new();
    let mut rankings: BTreeMap<String, FeatureRanking> = BTreeMap::new();
    let needs_shap = !cfg.methods.aggregations.is_empty();
    let mut explain_ids = Vec::new();
    let mut explain_x = Array2::zeros((0, d));
    let mut bg = BackgroundSet::new(Array2::zeros((0, d)));
    if needs_shap || cfg.methods.xplique {
        bg = BackgroundSet::sample(tr.x.view(), cfg.attribution.background, seed::derive_tag(cfg.seed, "background"))?;
        explain_ids = pick_rows(te.n_samples(), cfg.attribution.explain_samples, seed::derive_tag(cfg.seed, "explain"));
        explain_x = te.x.select(Axis(0), &explain_ids);
    }
    let explain_with = |model: &TrainedModel, method: Method, tag: &str| -> Result<(GlobalImportance, f64)> {
        let (a, t) = measure_runtime(|| {
            attribution::explain(
                model,
                method,
                explain_x.view(),
                &explain_ids,
                &bg,
                &cfg.attribution.explain,
                seed::derive_tag(cfg.seed, tag),
                &tr.schema.class_names,
                feature_names,
            )
        });
        let a = a?;
        if !a.flags.is_empty() {
            log::warn!("{tag}: {} flagged explanations, first: {}", a.flags.len(), a.flags[0]);
        }
        Ok((GlobalImportance::from_attributions(&a)?, t))
    };

    let mut common = Vec::new();
    let mut model_specific = BTreeMap::new();
    if needs_shap {
        for spec in &cfg.models {
            info!("kernel shap on {} ({} samples)", spec.name, explain_ids.len());
            let (g, t) = explain_with(&models[&spec.name], Method::KernelShap, &format!("shap/{}", spec.name))?;
            importances.insert(spec.name.clone(), g);
            explain_times.insert(spec.name.clone(), t);
        }
        let entries: Vec<(String, f64, &GlobalImportance)> = cfg
            .models
            .iter()
            .map(|s| (s.name.clone(), full_eval[&s.name].metrics.acc, &importances[&s.name]))
            .collect();
        let ctx = RankContext::from_importances(&entries)?;
        for (m, spec) in cfg.models.iter().enumerate() {
            let mut r = ctx.model_ranking(m);
            r.method = format!("{}:{}", Aggregation::ModelSpecific, spec.name);
            rankings.insert(r.method.clone(), r.clone());
            model_specific.insert(spec.name.clone(), r);
        }
        for agg in [
            Aggregation::OverallRank,
            Aggregation::WeightedRank,
            Aggregation::NormalizedWeightedRank,
            Aggregation::ModelsAttacks,
        ] {
            let r = match agg {
                Aggregation::OverallRank => overall_rank(&ctx)?,
                Aggregation::WeightedRank => weighted_rank(&ctx)?,
                Aggregation::NormalizedWeightedRank => normalized_weighted_rank(&ctx)?,
                _ => models_attacks_score(&ctx)?,
            };
            rankings.insert(r.method.clone(), r.clone());
            common.push(r);
        }
    }
    for b in &cfg.methods.baselines {
        info!("baseline ranking {b}");
        let r = baseline_rank(*b, tr, seed::derive_tag(cfg.seed, &format!("baseline/{b}")))?;
        rankings.insert(r.method.clone(), r);
    }
    if cfg.methods.xplique {
        let name = &cfg.methods.xplique_model;
        let mut per_method = Vec::new();
        let mut total = 0.0;
        for method in Method::XPLIQUE {
            info!("{method} on {name}");
            let (g, t) = explain_with(&models[name], method, &format!("xplique/{method}"))?;
            total += t;
            let r = rank_from_importance(format!("xplique:{method}"), &g.overall.to_vec(), feature_names);
            importances.insert(format!("{name}:{method}"), g);
            rankings.insert(r.method.clone(), r.clone());
            per_method.push(r);
        }
        let mut v = voting(&per_method)?;
        v.method = VOTING.to_string();
        rankings.insert(VOTING.to_string(), v);
        explain_times.insert(format!("{name}:xplique"), total);
    }
    Ok(RankingStage {
        models,
        full_eval,
        importances,
        explain_times,
        rankings,
        common,
        model_specific,
    })
}

/// The workflow from already prepared splits.
pub fn run_on_prepared(cfg: &ExperimentConfig, prepared: Prepared) -> Result<ExperimentOutput> {
    let Prepared { train: tr, test: te, report } = prepared;
    let d = tr.n_features();
    cfg.validate_for(d)?;
    let feature_names = tr.schema.feature_names.clone();
    let class_names = tr.schema.class_names.clone();
    info!("prepared {} train / {} test rows, {d} features", tr.n_samples(), te.n_samples());

    let mut stage = ranking_stage(cfg, &tr, &te)?;

    let methods = cfg.method_names();
    // every (model, subset) pair is trained once; cells run in parallel
    let mut jobs: Vec<(String, KValue, usize, Vec<usize>)> = Vec::new();
    for kv in &cfg.k_values {
        let KValue::Count(k) = *kv else { continue };
        for method in &methods {
            for (mi, spec) in cfg.models.iter().enumerate() {
                let ranking = stage.ranking_for(method, &spec.name, k)?;
                if method == Aggregation::CombinedSelection.name() {
                    stage.rankings.entry(ranking.method.clone()).or_insert_with(|| ranking.clone());
                }
                let mut subset = select_top_k(&ranking, k)?;
                subset.sort_unstable();
                jobs.push((method.clone(), *kv, mi, subset));
            }
        }
    }
    let mut unique: Vec<(usize, Vec<usize>)> = jobs.iter().map(|(_, _, mi, s)| (*mi, s.clone())).collect();
    unique.sort();
    unique.dedup();
    info!("retraining {} (model, subset) pairs", unique.len());
    let evaluated: Vec<Result<Evaluated>> = unique
        .par_iter()
        .map(|(mi, subset)| {
            let spec = &cfg.models[*mi];
            fit_and_evaluate(
                spec,
                &tr.select_features(subset),
                &te.select_features(subset),
                model_seed(cfg.seed, &spec.name),
            )
            .map(|(_, ev)| ev)
        })
        .collect();
    let mut cache: HashMap<(usize, Vec<usize>), Evaluated> = HashMap::new();
    for (key, ev) in unique.into_iter().zip(evaluated) {
        cache.insert(key, ev?);
    }

    let row = |spec: &ModelSpec, method: &str, k: KValue, ev: &Evaluated, features: Vec<String>, explain: f64| ResultRow {
        model: spec.name.clone(),
        method: method.to_string(),
        k,
        metrics: ev.metrics.clone(),
        per_class_accuracy: ev.per_class.clone(),
        attack_fpr: ev.attack_fpr,
        features,
        train_time_s: ev.train_time_s,
        test_time_s: ev.test_time_s,
        explain_time_s: explain,
    };
    let mut rows = Vec::new();
    for spec in &cfg.models {
        rows.push(row(spec, ALL_FEATURES, KValue::All, &stage.full_eval[&spec.name], feature_names.clone(), 0.0));
    }
    let mut jobs = jobs.into_iter().peekable();
    for kv in &cfg.k_values {
        for method in &methods {
            for (mi, spec) in cfg.models.iter().enumerate() {
                let explain = explain_time_for(method, spec, cfg, &stage.explain_times);
                if *kv == KValue::All {
                    rows.push(row(spec, method, KValue::All, &stage.full_eval[&spec.name], feature_names.clone(), explain));
                    continue;
                }
                let (_, _, _, subset) = jobs.next().expect("one job per selected cell");
                let ev = &cache[&(mi, subset.clone())];
                let names = subset.iter().map(|&j| feature_names[j].clone()).collect();
                rows.push(row(spec, method, *kv, ev, names, explain));
            }
        }
    }

    Ok(ExperimentOutput {
        config: cfg.clone(),
        report,
        class_names,
        feature_names,
        rows,
        rankings: stage.rankings,
        importances: stage.importances,
        models: stage.models,
        explain_times: stage.explain_times,
    })
}

fn explain_time_for(method: &str, spec: &ModelSpec, cfg: &ExperimentConfig, times: &BTreeMap<String, f64>) -> f64 {
    if method == VOTING {
        return times
            .get(&format!("{}:xplique", cfg.methods.xplique_model))
            .copied()
            .unwrap_or(0.0);
    }
    if method == Aggregation::ModelSpecific.name() {
        return times.get(&spec.name).copied().unwrap_or(0.0);
    }
    if method.parse::<Aggregation>().is_ok() {
        // aggregations use every model's explanation
        return times
            .iter()
            .filter(|(k, _)| cfg.model(k).is_some())
            .map(|(_, t)| t)
            .sum();
    }
    0.0
}
