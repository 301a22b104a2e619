//! Per-sample, per-class feature attributions and the global importances
//! derived from them.
//!
//! Perturbation methods (Kernel SHAP, occlusion, LIME) explain class
//! probabilities; gradient methods explain pre-softmax logits and need a
//! differentiable model.

mod gradient;
mod perturb;
mod shap;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gradient::{
    deconvnet, gradient_input, integrated_gradients, noise_ensemble, saliency, Differentiable, NoiseMode,
};
pub use perturb::{lime_tabular, occlusion, LimeConfig, LimeFit};
pub use shap::{
    exact_shapley_oracle, kernel_shap, shapley_from_values, Coalitions, ShapValues, MAX_EXACT_FEATURES,
    MAX_ORACLE_FEATURES,
};

use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::seed;

/// A batch function from `[rows][n_inputs]` to `[rows][n_outputs]`.
pub trait OutputFn: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

/// Class probabilities.
impl OutputFn for TrainedModel {
    fn n_inputs(&self) -> usize {
        self.n_features
    }
    fn n_outputs(&self) -> usize {
        self.n_classes
    }
    fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.predict_proba(x)
    }
}

/// Pre-softmax logits of a differentiable model.
pub struct Logits<'a>(pub &'a TrainedModel);

impl OutputFn for Logits<'_> {
    fn n_inputs(&self) -> usize {
        self.0.n_features
    }
    fn n_outputs(&self) -> usize {
        self.0.n_classes
    }
    fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.0.logits(x)
    }
}

/// Wraps a closure as an [`OutputFn`].
pub struct FnOutput<F> {
    n_inputs: usize,
    n_outputs: usize,
    f: F,
}

impl<F: Fn(ArrayView2<f64>) -> Array2<f64> + Sync> FnOutput<F> {
    pub fn new(n_inputs: usize, n_outputs: usize, f: F) -> Self {
        FnOutput { n_inputs, n_outputs, f }
    }
}

impl<F: Fn(ArrayView2<f64>) -> Array2<f64> + Sync> OutputFn for FnOutput<F> {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }
    fn n_outputs(&self) -> usize {
        self.n_outputs
    }
    fn eval(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs {
            return Err(Error::shape(format!("{} columns", self.n_inputs), x.ncols().to_string()));
        }
        Ok((self.f)(x))
    }
}

/// Reference rows used to impute absent features.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    pub data: Array2<f64>,
    pub seed: Option<u64>,
}

impl BackgroundSet {
    pub fn new(data: Array2<f64>) -> Self {
        BackgroundSet { data, seed: None }
    }

    /// `size` rows drawn without replacement (all rows when fewer exist).
    pub fn sample(x: ArrayView2<f64>, size: usize, seed: u64) -> Result<Self> {
        if x.nrows() == 0 || size == 0 {
            return Err(Error::InvalidArgument("background set needs at least one row".into()));
        }
        let rows = pick_rows(x.nrows(), size, seed);
        Ok(BackgroundSet {
            data: x.select(Axis(0), &rows),
            seed: Some(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// Sorted row indices of a seeded sample without replacement.
pub fn pick_rows(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rows = sample_indices(&mut seed::rng(seed), n, size).into_vec();
    rows.sort_unstable();
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "kernel-shap")]
    KernelShap,
    #[serde(rename = "saliency")]
    Saliency,
    #[serde(rename = "gradient-input")]
    GradientInput,
    #[serde(rename = "integrated-gradients")]
    IntegratedGradients,
    #[serde(rename = "smoothgrad")]
    SmoothGrad,
    #[serde(rename = "squaregrad")]
    SquareGrad,
    #[serde(rename = "vargrad")]
    VarGrad,
    #[serde(rename = "occlusion")]
    Occlusion,
    #[serde(rename = "deconvnet")]
    DeconvNet,
    #[serde(rename = "lime")]
    Lime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Probability,
    Logit,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::KernelShap,
        Method::Saliency,
        Method::GradientInput,
        Method::IntegratedGradients,
        Method::SmoothGrad,
        Method::SquareGrad,
        Method::VarGrad,
        Method::Occlusion,
        Method::DeconvNet,
        Method::Lime,
    ];

    /// The nine methods aggregated by voting on the neural network.
    pub const XPLIQUE: [Method; 9] = [
        Method::Saliency,
        Method::IntegratedGradients,
        Method::Occlusion,
        Method::SmoothGrad,
        Method::DeconvNet,
        Method::VarGrad,
        Method::SquareGrad,
        Method::Lime,
        Method::GradientInput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::KernelShap => "kernel-shap",
            Method::Saliency => "saliency",
            Method::GradientInput => "gradient-input",
            Method::IntegratedGradients => "integrated-gradients",
            Method::SmoothGrad => "smoothgrad",
            Method::SquareGrad => "squaregrad",
            Method::VarGrad => "vargrad",
            Method::Occlusion => "occlusion",
            Method::DeconvNet => "deconvnet",
            Method::Lime => "lime",
        }
    }

    pub fn target(self) -> Target {
        match self {
            Method::KernelShap | Method::Occlusion | Method::Lime => Target::Probability,
            _ => Target::Logit,
        }
    }

    pub fn needs_gradients(self) -> bool {
        self.target() == Target::Logit
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let alias = match key.as_str() {
            "shap" => "kernel-shap",
            "ig" => "integrated-gradients",
            "gradientinput" | "gradient-x-input" => "gradient-input",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attribution method `{s}`")))
    }
}

/// Budgets and knobs for every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub coalitions: Coalitions,
    pub ig_steps: usize,
    /// Per-feature baseline for integrated gradients; zeros when absent.
    pub ig_baseline: Option<Vec<f64>>,
    pub noise_samples: usize,
    pub noise_sigma: f64,
    pub occlusion_value: f64,
    pub lime: LimeConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            coalitions: Coalitions::Sampled(256),
            ig_steps: 64,
            ig_baseline: None,
            noise_samples: 32,
            noise_sigma: 0.1,
            occlusion_value: 0.0,
            lime: LimeConfig::default(),
        }
    }
}

/// `values[sample][class][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub method: Method,
    pub target: Target,
    pub values: Array3<f64>,
    /// Per-class base value (expected output); only Kernel SHAP sets it.
    pub base: Option<Array1<f64>>,
    pub sample_ids: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub flags: Vec<String>,
}

impl AttributionMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.dim().0
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "class", "feature", "value"])?;
        for (s, sid) in self.sample_ids.iter().enumerate() {
            for (c, cname) in self.class_names.iter().enumerate() {
                for (j, fname) in self.feature_names.iter().enumerate() {
                    let v = self.values[[s, c, j]];
                    w.write_record([sid.to_string(), cname.clone(), fname.clone(), v.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        if let Some(base) = &self.base {
            let side = base_path(path);
            let mut w = csv::Writer::from_path(&side)?;
            w.write_record(["class", "base"])?;
            for (c, b) in self.class_names.iter().zip(base) {
                w.write_record([c.clone(), b.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&side, e))?;
        }
        Ok(())
    }

    /// Reads a matrix written by [`write_csv`](Self::write_csv); class and
    /// feature order follow first appearance.
    pub fn read_csv(path: impl AsRef<Path>, method: Method) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut samples: Vec<usize> = Vec::new();
        let mut classes: Vec<String> = Vec::new();
        let mut features: Vec<String> = Vec::new();
        let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
        let index = |list: &mut Vec<String>, key: &str| match list.iter().position(|k| k == key) {
            Some(i) => i,
            None => {
                list.push(key.to_string());
                list.len() - 1
            }
        };
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Input(format!("{}: expected 4 columns", path.display())));
            }
            let sid: usize = rec[0]
                .parse()
                .map_err(|_| Error::Input(format!("bad sample id `{}`", &rec[0])))?;
            let s = samples.iter().position(|&x| x == sid).unwrap_or_else(|| {
                samples.push(sid);
                samples.len() - 1
            });
            let c = index(&mut classes, &rec[1]);
            let j = index(&mut features, &rec[2]);
            let v: f64 = rec[3]
                .parse()
                .map_err(|_| Error::Input(format!("bad attribution value `{}`", &rec[3])))?;
            cells.push((s, c, j, v));
        }
        let dims = (samples.len(), classes.len(), features.len());
        if cells.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::Input(format!("{}: incomplete attribution grid", path.display())));
        }
        let mut values = Array3::zeros(dims);
        for (s, c, j, v) in cells {
            values[[s, c, j]] = v;
        }
        let side = base_path(path);
        let base = if side.exists() {
            let mut r = csv::Reader::from_path(&side)?;
            let mut b = Array1::zeros(classes.len());
            for rec in r.records() {
                let rec = rec?;
                if let Some(c) = classes.iter().position(|k| k == &rec[0]) {
                    b[c] = rec[1]
                        .parse()
                        .map_err(|_| Error::Input(format!("bad base value `{}`", &rec[1])))?;
                }
            }
            Some(b)
        } else {
            None
        };
        Ok(AttributionMatrix {
            method,
            target: method.target(),
            values,
            base,
            sample_ids: samples,
            class_names: classes,
            feature_names: features,
            flags: Vec::new(),
        })
    }
}

fn base_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("attributions");
    path.with_file_name(format!("{stem}.base.csv"))
}

/// Mean absolute attribution per class, and its mean over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalImportance {
    pub method: String,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// `[class][feature]`
    pub per_class: Array2<f64>,
    pub overall: Array1<f64>,
}

impl GlobalImportance {
    pub fn new(method: impl Into<String>, class_names: Vec<String>, feature_names: Vec<String>, per_class: Array2<f64>) -> Self {
        let overall = per_class.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(feature_names.len()));
        GlobalImportance {
            method: method.into(),
            class_names,
            feature_names,
            per_class,
            overall,
        }
    }

    pub fn from_attributions(a: &AttributionMatrix) -> Result<Self> {
        if a.n_samples() == 0 {
            return Err(Error::InvalidArgument("no explained samples".into()));
        }
        let per_class = a.values.mapv(f64::abs).mean_axis(Axis(0)).expect("non-empty");
        Ok(GlobalImportance::new(
            a.method.name(),
            a.class_names.clone(),
            a.feature_names.clone(),
            per_class,
        ))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "feature", "importance"])?;
        for (c, cname) in self.class_names.iter().enumerate() {
            for (j, fname) in self.feature_names.iter().enumerate() {
                w.write_record([cname.clone(), fname.clone(), self.per_class[[c, j]].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, method: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut classes: Vec<String> = Vec::new();
        let mut features: Vec<String> = Vec::new();
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let c = classes.iter().position(|k| k == &rec[0]).unwrap_or_else(|| {
                classes.push(rec[0].to_string());
                classes.len() - 1
            });
            let j = features.iter().position(|k| k == &rec[1]).unwrap_or_else(|| {
                features.push(rec[1].to_string());
                features.len() - 1
            });
            let v: f64 = rec[2]
                .parse()
                .map_err(|_| Error::Input(format!("bad importance `{}`", &rec[2])))?;
            cells.push((c, j, v));
        }
        if cells.len() != classes.len() * features.len() || cells.is_empty() {
            return Err(Error::Input(format!("{}: incomplete importance grid", path.display())));
        }
        let mut per_class = Array2::zeros((classes.len(), features.len()));
        for (c, j, v) in cells {
            per_class[[c, j]] = v;
        }
        Ok(GlobalImportance::new(method, classes, features, per_class))
    }

    /// Plain-text horizontal bar chart of the overall importances,
    /// descending.
    pub fn bar_chart(&self, width: usize, top: Option<usize>) -> String {
        let mut order: Vec<usize> = (0..self.overall.len()).collect();
        order.sort_by(|&a, &b| self.overall[b].total_cmp(&self.overall[a]).then(a.cmp(&b)));
        let max = self.overall.iter().cloned().fold(0.0, f64::max);
        let name_w = self.feature_names.iter().map(|n| n.len()).max().unwrap_or(0);
        let mut out = String::new();
        for &j in order.iter().take(top.unwrap_or(order.len())) {
            let v = self.overall[j];
            let len = if max > 0.0 { (v / max * width as f64).round() as usize } else { 0 };
            out.push_str(&format!("{:<name_w$} | {} {:.6}\n", self.feature_names[j], "#".repeat(len), v));
        }
        out
    }

    pub fn write_chart(&self, path: impl AsRef<Path>, width: usize) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "# {} mean |attribution|", self.method).map_err(|e| Error::io(path, e))?;
        f.write_all(self.bar_chart(width, None).as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `[class][feature]` attributions, the optional base value and any flags.
pub type SampleAttribution = (Array2<f64>, Option<Array1<f64>>, Vec<String>);

/// Attributions of every class for one sample.
pub fn explain_one(
    model: &TrainedModel,
    method: Method,
    x: ArrayView1<f64>,
    bg: &BackgroundSet,
    cfg: &ExplainConfig,
    seed: u64,
) -> Result<SampleAttribution> {
    let k = model.n_classes;
    let per_class = |g: &dyn Fn(usize) -> Result<Array1<f64>>| -> Result<Array2<f64>> {
        let mut out = Array2::zeros((k, x.len()));
        for c in 0..k {
            out.row_mut(c).assign(&g(c)?);
        }
        Ok(out)
    };
    Ok(match method {
        Method::KernelShap => {
            let s = kernel_shap(model, x, bg, cfg.coalitions, seed)?;
            (s.phi, Some(s.base), s.flags)
        }
        Method::Occlusion => (occlusion(model, x, cfg.occlusion_value)?, None, Vec::new()),
        Method::Lime => {
            let fit = lime_tabular(model, x, &cfg.lime, seed)?;
            (fit.coefficients, None, fit.flags)
        }
        _ => {
            let mlp = model.require_mlp(method.name())?;
            let values = match method {
                Method::Saliency => per_class(&|c| saliency(mlp, x, c))?,
                Method::GradientInput => per_class(&|c| gradient_input(mlp, x, c))?,
                Method::IntegratedGradients => {
                    let baseline = match &cfg.ig_baseline {
                        Some(b) => Array1::from(b.clone()),
                        None => Array1::zeros(x.len()),
                    };
                    per_class(&|c| integrated_gradients(mlp, x, baseline.view(), cfg.ig_steps, c))?
                }
                Method::SmoothGrad | Method::SquareGrad | Method::VarGrad => {
                    let mode = match method {
                        Method::SmoothGrad => NoiseMode::Smooth,
                        Method::SquareGrad => NoiseMode::Square,
                        _ => NoiseMode::Var,
                    };
                    // same noise draws for every class
                    per_class(&|c| noise_ensemble(mlp, x, c, mode, cfg.noise_samples, cfg.noise_sigma, seed))?
                }
                Method::DeconvNet => per_class(&|c| deconvnet(mlp, x, c))?,
                _ => unreachable!("perturbation methods handled above"),
            };
            (values, None, Vec::new())
        }
    })
}

#[allow(clippy::too_many_arguments)]
/// Explains the rows of `x` (identified by `sample_ids`) in parallel; the
/// result does not depend on the number of worker threads.
pub fn explain(
    model: &TrainedModel,
    method: Method,
    x: ArrayView2<f64>,
    sample_ids: &[usize],
    bg: &BackgroundSet,
    cfg: &ExplainConfig,
    seed: u64,
    class_names: &[String],
    feature_names: &[String],
) -> Result<AttributionMatrix> {
    if sample_ids.len() != x.nrows() {
        return Err(Error::shape(format!("{} sample ids", x.nrows()), sample_ids.len().to_string()));
    }
    if class_names.len() != model.n_classes || feature_names.len() != model.n_features {
        return Err(Error::shape(
            format!("{} classes x {} features", model.n_classes, model.n_features),
            format!("{} x {}", class_names.len(), feature_names.len()),
        ));
    }
    if method.needs_gradients() {
        model.require_mlp(method.name())?;
    }
    let results: Vec<Result<SampleAttribution>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| explain_one(model, method, x.row(i), bg, cfg, seed::derive(seed, sample_ids[i] as u64)))
        .collect();
    let mut values = Array3::zeros((x.nrows(), model.n_classes, model.n_features));
    let mut base = None;
    let mut flags = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (v, b, f) = r?;
        values.index_axis_mut(Axis(0), i).assign(&v);
        if base.is_none() {
            base = b;
        }
        flags.extend(f.into_iter().map(|m| format!("sample {}: {m}", sample_ids[i])));
    }
    Ok(AttributionMatrix {
        method,
        target: method.target(),
        values,
        base,
        sample_ids: sample_ids.to_vec(),
        class_names: class_names.to_vec(),
        feature_names: feature_names.to_vec(),
        flags,
    })
}
