//! Command-line front end. Every pipeline stage is its own subcommand;
//! `benchmark` runs them all.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::attribution::{self, pick_rows, BackgroundSet, Coalitions, GlobalImportance, Method};
use crate::benchmark::{
    metrics_tables, prepare, ranking_stage, read_metrics_csv, run_benchmark, score_rows, write_boards,
    write_metrics_csv, DataSource, ExperimentConfig, KValue, ModelSpec, ResultRow, ALL_FEATURES, VOTING,
};
use crate::error::{Error, Result};
use crate::flowdata::{infer_schema, load_csv, write_dataset_csv, Dataset, FeatureSchema, NonFinitePolicy, SynthSpec};
use crate::metrics::{self, MetricSet};
use crate::models::{train, TrainedModel};
use crate::ranking::{
    combined_selection, models_attacks_score, normalized_weighted_rank, overall_rank, weighted_rank, Aggregation,
    BaselineMethod, FeatureRanking, RankContext,
};
use crate::seed;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "XAI_IDS_CONFIG";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xai-ids", version, about = "XAI-driven feature selection for intrusion detection")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults to $XAI_IDS_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-feature synthetic flow CSV.
    Synth(SynthArgs),
    /// Load, deduplicate, split, oversample and scale; write the splits.
    Prepare {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a prepared CSV.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Model name (RF, ADA, KNN, SVM, MLP, DNN, GBDT, DT or one from the config).
        #[arg(long, default_value = "RF")]
        model: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on a prepared CSV.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Metrics CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attribute a saved model's predictions.
    Explain(ExplainArgs),
    /// Build a feature ranking.
    Rank(RankArgs),
    /// Keep the top-k features of a ranking.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ranking: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full workflow: train, explain, rank, select, retrain, score, report.
    Benchmark {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Run directory (default runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute scoreboards and tables from a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 30)]
    pub features: usize,
    #[arg(long, default_value_t = 5)]
    pub informative: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the schema file.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

/// A labelled CSV plus how to read it.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file; inferred from the CSV header when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_labeled(&self.data, self.schema.as_deref(), &self.label_column)
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Background CSV (defaults to the explained data).
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub background_size: usize,
    #[arg(long, default_value = "kernel-shap")]
    pub method: Method,
    /// Number of explained rows.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Coalitions per explanation: a count or `all`.
    #[arg(long)]
    pub coalitions: Option<Coalitions>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-sample attributions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Global importance CSV.
    #[arg(long)]
    pub importance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Aggregation, baseline or `voting`.
    #[arg(long)]
    pub method: String,
    /// Model for model_specific (default: first configured model).
    #[arg(long)]
    pub model: Option<String>,
    /// Reuse importances from an earlier benchmark run directory.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Ranking CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags that override the configuration file.
#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// Flow CSV files (replaces the configured data source).
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Stratified subsample size.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Selection methods: aggregations, baselines and/or `voting`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Selection sizes, e.g. `5,10,all` (`rank` takes a single count).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<KValue>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub background: Option<usize>,
    #[arg(long)]
    pub explain_samples: Option<usize>,
    #[arg(long)]
    pub coalitions: Option<Coalitions>,
}

impl ExperimentArgs {
    /// `cfg` with every given flag applied.
    pub fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if !self.data.is_empty() {
            cfg.data.source = DataSource::Csv {
                paths: self.data.clone(),
                schema: self.schema.clone(),
                label_column: self.label_column.clone(),
            };
        }
        if let Some(n) = self.subsample {
            cfg.data.subsample = Some(n);
        }
        if !self.models.is_empty() {
            cfg.models = self
                .models
                .iter()
                .map(|name| match cfg.model(name) {
                    Some(m) => Ok(m.clone()),
                    None => ModelSpec::from_name(name),
                })
                .collect::<Result<_>>()?;
            if !cfg.models.iter().any(|m| m.name == cfg.methods.xplique_model) {
                match cfg.models.iter().find(|m| m.params.kind().is_differentiable()) {
                    Some(m) => cfg.methods.xplique_model = m.name.clone(),
                    None if cfg.methods.xplique => {
                        log::warn!("no differentiable model selected; voting disabled");
                        cfg.methods.xplique = false;
                    }
                    None => {}
                }
            }
        }
        if !self.methods.is_empty() {
            cfg.methods.aggregations.clear();
            cfg.methods.baselines.clear();
            cfg.methods.xplique = false;
            for m in &self.methods {
                if m.eq_ignore_ascii_case(VOTING) {
                    cfg.methods.xplique = true;
                } else if let Ok(a) = m.parse::<Aggregation>() {
                    cfg.methods.aggregations.push(a);
                } else {
                    cfg.methods.baselines.push(
                        m.parse::<BaselineMethod>()
                            .map_err(|_| Error::Config(format!("unknown selection method `{m}`")))?,
                    );
                }
            }
        }
        if !self.k.is_empty() {
            cfg.k_values = self.k.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(b) = self.background {
            cfg.attribution.background = b;
        }
        if let Some(n) = self.explain_samples {
            cfg.attribution.explain_samples = n;
        }
        if let Some(c) = self.coalitions {
            cfg.attribution.explain.coalitions = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Schema(_)
        | Error::Label { .. }
        | Error::Input(_)
        | Error::Shape { .. }
        | Error::MissingCell(_)
        | Error::Artifact(_)
        | Error::Io { .. }
        | Error::Csv(_) => EXIT_DATA,
        Error::Capability { .. } | Error::Numerical(_) | Error::Json(_) => EXIT_INTERNAL,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Diagnostics go to stderr.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn base_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    match path.map(Path::to_path_buf).or(from_env) {
        Some(p) => {
            info!("config from {}", p.display());
            ExperimentConfig::load(p)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_labeled(path: &Path, schema: Option<&Path>, label_column: &str) -> Result<Dataset> {
    let schema = match schema {
        Some(p) => FeatureSchema::load(p)?,
        None => infer_schema(path, label_column)?,
    };
    Ok(load_csv(path, &schema, NonFinitePolicy::DropRow)?.0)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Prepare { exp, out } => cmd_prepare(exp.apply(base_config(config)?)?, &out),
        Command::Train { data, model, seed, out } => {
            let cfg = base_config(config)?;
            let spec = match cfg.model(&model) {
                Some(m) => m.clone(),
                None => ModelSpec::from_name(&model)?,
            };
            let d = data.load()?;
            let s = seed.unwrap_or_else(|| seed::derive_tag(cfg.seed, &format!("train/{}", spec.name)));
            let (m, t) = crate::benchmark::measure_runtime(|| train(&spec.params, &d, s));
            let m = m?;
            m.save(&out)?;
            println!("trained {} on {} rows x {} features in {t:.3}s -> {}", spec.name, d.n_samples(), d.n_features(), out.display());
            Ok(())
        }
        Command::Evaluate { data, model, out } => cmd_evaluate(&data, &model, out.as_deref()),
        Command::Explain(a) => cmd_explain(&a),
        Command::Rank(a) => cmd_rank(&a, base_config(config)?),
        Command::Select { data, ranking, k, out } => {
            let d = data.load()?;
            let r = FeatureRanking::read_csv(&ranking, &d.schema.feature_names)?;
            let mut subset = crate::ranking::select_top_k(&r, k)?;
            subset.sort_unstable();
            let sel = d.select_features(&subset);
            write_dataset_csv(&sel, &out)?;
            println!("kept {}: {}", k, sel.schema.feature_names.join(","));
            Ok(())
        }
        Command::Benchmark { exp, out } => {
            let cfg = exp.apply(base_config(config)?)?;
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            cmd_benchmark(&cfg, &out)
        }
        Command::Report { run } => cmd_report(&run),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_samples: a.samples,
        n_features: a.features,
        n_informative: a.informative,
        n_classes: a.classes,
        separation: a.separation,
        class_weights: None,
        seed: a.seed,
    };
    let d = spec.generate()?;
    write_dataset_csv(&d, &a.out)?;
    if let Some(p) = &a.schema_out {
        d.schema.save(p)?;
    }
    println!(
        "wrote {} rows, {} features ({} informative: {}) to {}",
        d.n_samples(),
        d.n_features(),
        a.informative,
        d.schema.feature_names[..a.informative].join(","),
        a.out.display()
    );
    Ok(())
}

fn cmd_prepare(cfg: ExperimentConfig, out: &Path) -> Result<()> {
    mkdir(out)?;
    let p = prepare(&cfg)?;
    write_dataset_csv(&p.train, out.join("train.csv"))?;
    write_dataset_csv(&p.test, out.join("test.csv"))?;
    p.train.schema.save(out.join("schema.txt"))?;
    p.report.write_csv(out.join("preprocess.csv"))?;
    let txt = out.join("preprocess.txt");
    let mut buf = Vec::new();
    p.report.write_text(&mut buf).map_err(|e| Error::io(&txt, e))?;
    std::fs::write(&txt, buf).map_err(|e| Error::io(&txt, e))?;
    cfg.save(out.join("config.toml"))?;
    println!("train {} rows, test {} rows -> {}", p.train.n_samples(), p.test.n_samples(), out.display());
    Ok(())
}

fn cmd_evaluate(data: &DataArgs, model: &Path, out: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    let m = TrainedModel::load(model)?;
    if m.n_classes != d.n_classes() {
        return Err(Error::shape(format!("{} classes", m.n_classes), format!("{} in the data schema", d.n_classes())));
    }
    let (probs, t) = crate::benchmark::measure_runtime(|| m.predict_proba(d.x.view()));
    let (ms, cm) = metrics::evaluate(&d.y, probs?.view())?;
    let fpr = metrics::false_positive_rate(&cm, d.schema.normal_class())?;
    println!("averaging: {}", metrics::AVERAGING);
    for (n, v) in MetricSet::NAMES.iter().zip(ms.values()) {
        println!("{n:>7} {v:.6}");
    }
    println!("benign false-positive rate {fpr:.6}; predicted {} rows in {t:.3}s", d.n_samples());
    for f in &ms.flags {
        println!("note: {f}");
    }
    if let Some(p) = out {
        let name = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let row = ResultRow {
            model: name,
            method: ALL_FEATURES.into(),
            k: KValue::All,
            metrics: ms,
            per_class_accuracy: metrics::per_class_accuracy(&cm),
            attack_fpr: fpr,
            features: d.schema.feature_names.clone(),
            train_time_s: 0.0,
            test_time_s: t,
            explain_time_s: 0.0,
        };
        write_metrics_csv(&[row], p)?;
    }
    Ok(())
}

fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let d = a.data.load()?;
    let m = TrainedModel::load(&a.model)?;
    let bg_data = match &a.background {
        Some(p) => load_labeled(p, a.data.schema.as_deref(), &a.data.label_column)?,
        None => d.clone(),
    };
    let bg = BackgroundSet::sample(bg_data.x.view(), a.background_size, seed::derive_tag(a.seed, "background"))?;
    let ids = pick_rows(d.n_samples(), a.samples, seed::derive_tag(a.seed, "explain"));
    let x = d.x.select(ndarray::Axis(0), &ids);
    let mut cfg = crate::attribution::ExplainConfig::default();
    if let Some(c) = a.coalitions {
        cfg.coalitions = c;
    }
    let (attr, t) = crate::benchmark::measure_runtime(|| {
        attribution::explain(
            &m,
            a.method,
            x.view(),
            &ids,
            &bg,
            &cfg,
            seed::derive_tag(a.seed, "attribution"),
            &d.schema.class_names,
            &d.schema.feature_names,
        )
    });
    let attr = attr?;
    attr.write_csv(&a.out)?;
    let g = GlobalImportance::from_attributions(&attr)?;
    if let Some(p) = &a.importance {
        g.write_csv(p)?;
    }
    println!("{} on {} rows in {t:.2}s ({} flagged)", a.method, ids.len(), attr.flags.len());
    print!("{}", g.bar_chart(40, Some(10)));
    Ok(())
}

fn aggregate(ctx: &RankContext, agg: Aggregation, model: Option<&str>, k: Option<usize>) -> Result<FeatureRanking> {
    match agg {
        Aggregation::ModelSpecific => {
            let m = match model {
                Some(name) => ctx
                    .models
                    .iter()
                    .position(|x| x == name)
                    .ok_or_else(|| Error::Config(format!("unknown model `{name}`")))?,
                None => 0,
            };
            Ok(ctx.model_ranking(m))
        }
        Aggregation::OverallRank => overall_rank(ctx),
        Aggregation::WeightedRank => weighted_rank(ctx),
        Aggregation::NormalizedWeightedRank => normalized_weighted_rank(ctx),
        Aggregation::ModelsAttacks => models_attacks_score(ctx),
        Aggregation::CombinedSelection => {
            let k = k.ok_or_else(|| Error::Config("combined_selection needs --k".into()))?;
            let mut inputs = vec![
                overall_rank(ctx)?,
                weighted_rank(ctx)?,
                normalized_weighted_rank(ctx)?,
                models_attacks_score(ctx)?,
            ];
            inputs.extend((0..ctx.models.len()).map(|m| ctx.model_ranking(m)));
            combined_selection(&inputs, k)
        }
    }
}

/// Rank context from a benchmark run directory.
fn context_from_run(run: &Path) -> Result<RankContext> {
    let cfg = ExperimentConfig::load(run.join("config.toml"))?;
    let rows = read_metrics_csv(run.join("metrics/metrics.csv"))?;
    let mut imps = Vec::new();
    for spec in &cfg.models {
        let acc = rows
            .iter()
            .find(|r| r.model == spec.name && r.method == ALL_FEATURES)
            .map(|r| r.metrics.acc)
            .ok_or_else(|| Error::MissingCell(format!("full-feature accuracy of {}", spec.name)))?;
        let path = run.join("importance").join(format!("{}.csv", crate::benchmark::file_stem(&spec.name)));
        imps.push((spec.name.clone(), acc, GlobalImportance::read_csv(&path, Method::KernelShap.name())?));
    }
    let refs: Vec<(String, f64, &GlobalImportance)> = imps.iter().map(|(n, a, g)| (n.clone(), *a, g)).collect();
    RankContext::from_importances(&refs)
}

fn cmd_rank(a: &RankArgs, base: ExperimentConfig) -> Result<()> {
    // a single `--k` is the selection size
    let k = match a.exp.k.as_slice() {
        [] => None,
        [KValue::Count(k)] => Some(*k),
        _ => return Err(Error::Config("rank takes a single numeric --k".into())),
    };
    let ranking = match a.method.parse::<Aggregation>() {
        Ok(agg) => {
            let ctx = match &a.run {
                Some(run) => context_from_run(run)?,
                None => {
                    let mut cfg = a.exp.apply(base)?;
                    cfg.k_values = vec![KValue::All];
                    cfg.methods.aggregations = vec![Aggregation::OverallRank];
                    cfg.methods.baselines.clear();
                    cfg.methods.xplique = false;
                    let p = prepare(&cfg)?;
                    let stage = ranking_stage(&cfg, &p.train, &p.test)?;
                    let entries: Vec<(String, f64, &GlobalImportance)> = cfg
                        .models
                        .iter()
                        .map(|s| (s.name.clone(), stage.accuracy(&s.name).unwrap_or(0.0), &stage.importances[&s.name]))
                        .collect();
                    RankContext::from_importances(&entries)?
                }
            };
            aggregate(&ctx, agg, a.model.as_deref(), k)?
        }
        Err(_) => {
            let method = if a.method.eq_ignore_ascii_case(VOTING) {
                VOTING.to_string()
            } else {
                a.method
                    .parse::<BaselineMethod>()
                    .map_err(|_| Error::Config(format!("unknown ranking method `{}`", a.method)))?
                    .name()
                    .to_string()
            };
            match &a.run {
                Some(run) => {
                    let cfg = ExperimentConfig::load(run.join("config.toml"))?;
                    let p = prepare(&cfg)?;
                    FeatureRanking::read_csv(run.join("rankings").join(format!("{method}.csv")), &p.train.schema.feature_names)?
                }
                None => {
                    let mut cfg = a.exp.apply(base)?;
                    cfg.k_values = vec![KValue::All];
                    cfg.methods.aggregations.clear();
                    cfg.methods.baselines.clear();
                    cfg.methods.xplique = method == VOTING;
                    if let Ok(b) = method.parse::<BaselineMethod>() {
                        cfg.methods.baselines.push(b);
                        cfg.models.truncate(1);
                    }
                    let p = prepare(&cfg)?;
                    let stage = ranking_stage(&cfg, &p.train, &p.test)?;
                    stage.rankings[&method].clone()
                }
            }
        }
    };
    if let Some(k) = k {
        eprintln!("top {k}: {}", ranking.top_names(k).join(","));
    }
    match &a.out {
        Some(p) => ranking.write_csv(p),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["method", "rank", "feature", "score"])?;
            ranking.write_records(&mut w)?;
            w.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_benchmark(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (_, boards) = run_benchmark(cfg, out)?;
    for b in &boards {
        println!("{}", b.to_table());
    }
    println!("run written to {}", out.display());
    Ok(())
}

fn cmd_report(run: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(run.join("config.toml"))?;
    let rows = read_metrics_csv(run.join("metrics/metrics.csv"))?;
    let boards = score_rows(&rows, &cfg.method_names())?;
    write_boards(&boards, run.join("boards"))?;
    let tables = metrics_tables(&rows);
    let p = run.join("metrics/metrics.txt");
    std::fs::write(&p, &tables).map_err(|e| Error::io(&p, e))?;
    for b in &boards {
        println!("{}", b.to_table());
    }
    Ok(())
}
