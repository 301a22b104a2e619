//! Run-directory layout:
//!
//! ```text
//! config.toml                 effective configuration
//! preprocess.csv / .txt       ingestion and preprocessing bookkeeping
//! models/<model>.model        full-feature model artifacts
//! importance/<source>.csv     class,feature,importance
//! rankings/<method>.csv       method,rank,feature,score
//! metrics/metrics.csv         model,method,k,acc,prec,rec,f1,bacc,mcc,aucroc,fpr
//! metrics/metrics.txt         per-k tables, stamped with the averaging mode
//! metrics/per_class.csv       model,method,k,class,accuracy
//! metrics/fpr.csv             model,method,k,fpr
//! metrics/features.csv        model,method,k,features
//! metrics/runtimes.csv        model,method,k,train_time_s,test_time_s,explain_time_s
//! tables/overall_importance.csv  source,rank,feature,importance
//! tables/per_class_top5.csv      source,class,rank,feature,importance
//! boards/<label>.csv + boards.txt
//! charts/<source>.txt         bar charts of global importance
//! ```
//!
//! Every file except `runtimes.csv` is a pure function of the configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, KValue};
use super::pipeline::{run_experiment_matrix, ExperimentOutput, ResultRow};
use super::scoring::{scoring_by_k, weighted_scoring, ScoreBoard};
use crate::attribution::GlobalImportance;
use crate::error::{Error, Result};
use crate::metrics::{MetricSet, AVERAGING};

pub const METRICS_HEADER: [&str; 11] = ["model", "method", "k", "acc", "prec", "rec", "f1", "bacc", "mcc", "aucroc", "fpr"];

/// File-name-safe version of a method or model name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| Error::io(p, e))
}

fn writer(p: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(p)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, p: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(p, e))
}

pub fn write_metrics_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        let mut rec = vec![r.model.clone(), r.method.clone(), r.k.to_string()];
        rec.extend(r.metrics.values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Rows with only identity and metrics populated.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Input(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut v = [0.0; 8];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[3 + i]
                .parse()
                .map_err(|_| Error::Input(format!("{}: bad number `{}`", path.display(), &rec[3 + i])))?;
        }
        out.push(ResultRow {
            model: rec[0].to_string(),
            method: rec[1].to_string(),
            k: rec[2].parse()?,
            metrics: MetricSet::from_values(v),
            per_class_accuracy: Vec::new(),
            attack_fpr: 0.0,
            features: Vec::new(),
            train_time_s: 0.0,
            test_time_s: 0.0,
            explain_time_s: 0.0,
        });
    }
    Ok(out)
}

/// Per-k fixed-width metric tables (one block per k, one line per
/// model/method), headed by the averaging mode.
pub fn metrics_tables(rows: &[ResultRow]) -> String {
    let mut by_k: BTreeMap<KValue, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_k.entry(r.k).or_default().push(r);
    }
    let mw = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let tw = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut s = format!("averaging: {AVERAGING}\n");
    for (k, rs) in by_k {
        let _ = writeln!(s, "\n[k={k}]");
        let _ = write!(s, "{:<mw$}  {:<tw$}", "model", "method");
        for n in MetricSet::NAMES {
            let _ = write!(s, "  {n:>7}");
        }
        s.push('\n');
        for r in rs {
            let _ = write!(s, "{:<mw$}  {:<tw$}", r.model, r.method);
            for v in r.metrics.values() {
                let _ = write!(s, "  {v:>7.4}");
            }
            s.push('\n');
        }
    }
    s
}

fn write_importance_tables(imps: &BTreeMap<String, GlobalImportance>, dir: &Path) -> Result<()> {
    let p = dir.join("overall_importance.csv");
    let mut w = writer(&p)?;
    w.write_record(["source", "rank", "feature", "importance"])?;
    for (src, g) in imps {
        let mut order: Vec<usize> = (0..g.overall.len()).collect();
        order.sort_by(|&a, &b| g.overall[b].total_cmp(&g.overall[a]).then(a.cmp(&b)));
        for (r, &j) in order.iter().enumerate() {
            w.write_record([src.clone(), (r + 1).to_string(), g.feature_names[j].clone(), g.overall[j].to_string()])?;
        }
    }
    finish(w, &p)?;

    let p = dir.join("per_class_top5.csv");
    let mut w = writer(&p)?;
    w.write_record(["source", "class", "rank", "feature", "importance"])?;
    for (src, g) in imps {
        for (c, class) in g.class_names.iter().enumerate() {
            let row = g.per_class.row(c);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            for (r, &j) in order.iter().take(5).enumerate() {
                w.write_record([src.clone(), class.clone(), (r + 1).to_string(), g.feature_names[j].clone(), row[j].to_string()])?;
            }
        }
    }
    finish(w, &p)
}

/// Per-k boards followed by the board over every k, labelled `overall`.
pub fn score_rows(rows: &[ResultRow], methods: &[String]) -> Result<Vec<ScoreBoard>> {
    let mut boards = scoring_by_k(rows, methods)?;
    let mut overall = weighted_scoring(rows, methods)?;
    overall.label = "overall".into();
    boards.push(overall);
    Ok(boards)
}

/// The complete benchmark: run the matrix, score it and write `out_dir`.
pub fn run_benchmark(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<(ExperimentOutput, Vec<ScoreBoard>)> {
    let out_dir = out_dir.as_ref();
    mkdir(out_dir)?;
    cfg.save(out_dir.join("config.toml"))?;
    let result = run_experiment_matrix(cfg)?;
    let boards = score_rows(&result.rows, &cfg.method_names())?;
    emit_reports(&result, &boards, out_dir)?;
    Ok((result, boards))
}

/// Writes the full run directory and returns the paths written.
pub fn emit_reports(out: &ExperimentOutput, boards: &[ScoreBoard], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = out_dir.as_ref();
    let mut written = Vec::new();
    for sub in ["models", "importance", "rankings", "metrics", "tables", "boards", "charts"] {
        mkdir(&root.join(sub))?;
    }

    let p = root.join("config.toml");
    out.config.save(&p)?;
    written.push(p);
    let p = root.join("preprocess.csv");
    out.report.write_csv(&p)?;
    written.push(p);
    let p = root.join("preprocess.txt");
    let mut text = Vec::new();
    out.report.write_text(&mut text).map_err(|e| Error::io(&p, e))?;
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    written.push(p);

    for (name, m) in &out.models {
        let p = root.join("models").join(format!("{}.model", file_stem(name)));
        m.save(&p)?;
        written.push(p);
    }
    for (src, g) in &out.importances {
        let stem = file_stem(src);
        let p = root.join("importance").join(format!("{stem}.csv"));
        g.write_csv(&p)?;
        written.push(p);
        let p = root.join("charts").join(format!("{stem}.txt"));
        g.write_chart(&p, 40)?;
        written.push(p);
    }
    write_importance_tables(&out.importances, &root.join("tables"))?;
    written.push(root.join("tables/overall_importance.csv"));
    written.push(root.join("tables/per_class_top5.csv"));

    for (name, r) in &out.rankings {
        let p = root.join("rankings").join(format!("{}.csv", file_stem(name)));
        r.write_csv(&p)?;
        written.push(p);
    }

    let m = root.join("metrics");
    let p = m.join("metrics.csv");
    write_metrics_csv(&out.rows, &p)?;
    written.push(p);
    let p = m.join("metrics.txt");
    write_text(&p, &metrics_tables(&out.rows))?;
    written.push(p);

    let p = m.join("per_class.csv");
    let mut w = writer(&p)?;
    w.write_record(["model", "method", "k", "class", "accuracy"])?;
    for r in &out.rows {
        for (c, a) in out.class_names.iter().zip(&r.per_class_accuracy) {
            w.write_record([r.model.clone(), r.method.clone(), r.k.to_string(), c.clone(), a.to_string()])?;
        }
    }
    finish(w, &p)?;
    written.push(p);

    let p = m.join("fpr.csv");
    let mut w = writer(&p)?;
    w.write_record(["model", "method", "k", "fpr"])?;
    for r in &out.rows {
        w.write_record([r.model.clone(), r.method.clone(), r.k.to_string(), r.attack_fpr.to_string()])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = m.join("features.csv");
    let mut w = writer(&p)?;
    w.write_record(["model", "method", "k", "features"])?;
    for r in &out.rows {
        w.write_record([r.model.clone(), r.method.clone(), r.k.to_string(), r.features.join(";")])?;
    }
    finish(w, &p)?;
    written.push(p);

    let p = m.join("runtimes.csv");
    let mut w = writer(&p)?;
    w.write_record(["model", "method", "k", "train_time_s", "test_time_s", "explain_time_s"])?;
    for r in &out.rows {
        w.write_record([
            r.model.clone(),
            r.method.clone(),
            r.k.to_string(),
            format!("{:.6}", r.train_time_s),
            format!("{:.6}", r.test_time_s),
            format!("{:.6}", r.explain_time_s),
        ])?;
    }
    finish(w, &p)?;
    written.push(p);

    written.extend(write_boards(boards, root.join("boards"))?);
    Ok(written)
}

pub fn write_boards(boards: &[ScoreBoard], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    mkdir(dir)?;
    let mut written = Vec::new();
    let mut text = String::new();
    for b in boards {
        let p = dir.join(format!("{}.csv", file_stem(&b.label.replace('=', ""))));
        b.write_csv(&p)?;
        written.push(p);
        text.push_str(&b.to_table());
        text.push('\n');
    }
    let p = dir.join("boards.txt");
    write_text(&p, &text)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip() {
        let row = ResultRow {
            model: "RF".into(),
            method: "chi2".into(),
            k: KValue::Count(5),
            metrics: MetricSet::from_values([0.9, 0.8, 0.7, 0.75, 0.71, 0.6, 0.95, 0.01]),
            per_class_accuracy: vec![],
            attack_fpr: 0.0,
            features: vec![],
            train_time_s: 0.0,
            test_time_s: 0.0,
            explain_time_s: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(std::slice::from_ref(&row), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 11);
        assert_eq!(read_metrics_csv(&p).unwrap(), vec![row.clone()]);
        assert!(metrics_tables(&[row]).starts_with("averaging: macro"));
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("model_specific:RF"), "model_specific_RF");
        assert_eq!(file_stem("DNN:kernel-shap"), "DNN_kernel-shap");
    }
}
