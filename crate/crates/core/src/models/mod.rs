//! The classifier zoo behind one probabilistic-prediction interface.
//!
//! Every [`TrainedModel`] answers [`TrainedModel::predict_proba`]; MLPs also
//! expose input gradients of their class logits.
//!
//! # Artifact format
//!
//! A saved model is a UTF-8 text file:
//!
//! ```text
//! XAI-IDS-MODEL
//! version 1
//! kind RandomForest
//! {"kind":"RandomForest","n_features":...}
//! ```
//!
//! The last line is the JSON encoding of the whole [`TrainedModel`], floats
//! written in shortest round-trip form, so loading reproduces predictions
//! bit for bit.

mod adaboost;
mod forest;
pub(crate) mod gbdt;
mod knn;
mod mlp;
mod svm;
mod tree;

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::Dataset;

pub use adaboost::{AdaBoost, AdaBoostParams};
pub use forest::{ForestParams, RandomForest};
pub use gbdt::{Gbdt, GbdtParams, RegNode, RegTree};
pub use knn::{Knn, KnnParams};
pub use mlp::{Dense, Mlp, MlpParams, ReluBackward, Width};
pub use svm::{LinearSvm, SvmParams};
pub use tree::{DecisionTree, MaxFeatures, Node, TreeParams};

pub const ARTIFACT_MAGIC: &str = "XAI-IDS-MODEL";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    AdaBoost,
    Knn,
    LinearSvm,
    Mlp,
    Gbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::AdaBoost,
        ModelKind::Knn,
        ModelKind::LinearSvm,
        ModelKind::Mlp,
        ModelKind::Gbdt,
    ];

    pub fn is_differentiable(self) -> bool {
        self == ModelKind::Mlp
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

/// Training configuration, one variant per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyperparams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
    Knn(KnnParams),
    LinearSvm(SvmParams),
    Mlp(MlpParams),
    Gbdt(GbdtParams),
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::DecisionTree(_) => ModelKind::DecisionTree,
            Hyperparams::RandomForest(_) => ModelKind::RandomForest,
            Hyperparams::AdaBoost(_) => ModelKind::AdaBoost,
            Hyperparams::Knn(_) => ModelKind::Knn,
            Hyperparams::LinearSvm(_) => ModelKind::LinearSvm,
            Hyperparams::Mlp(_) => ModelKind::Mlp,
            Hyperparams::Gbdt(_) => ModelKind::Gbdt,
        }
    }

    pub fn default_for(kind: ModelKind) -> Hyperparams {
        match kind {
            ModelKind::DecisionTree => Hyperparams::DecisionTree(TreeParams::default()),
            ModelKind::RandomForest => Hyperparams::RandomForest(ForestParams::default()),
            ModelKind::AdaBoost => Hyperparams::AdaBoost(AdaBoostParams::default()),
            ModelKind::Knn => Hyperparams::Knn(KnnParams::default()),
            ModelKind::LinearSvm => Hyperparams::LinearSvm(SvmParams::default()),
            ModelKind::Mlp => Hyperparams::Mlp(MlpParams::default()),
            ModelKind::Gbdt => Hyperparams::Gbdt(GbdtParams::default()),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match self {
            Hyperparams::DecisionTree(p) if p.min_samples_split == 0 => bad("min_samples_split must be positive"),
            Hyperparams::RandomForest(p) if p.n_trees == 0 || p.min_samples_split == 0 => {
                bad("forest needs positive n_trees and min_samples_split")
            }
            Hyperparams::AdaBoost(p) if p.n_stages == 0 || p.learning_rate <= 0.0 => {
                bad("AdaBoost needs positive n_stages and learning_rate")
            }
            Hyperparams::Knn(p) if p.k == 0 => bad("k must be positive"),
            Hyperparams::LinearSvm(p) if p.c <= 0.0 || p.epochs == 0 || p.eta0 <= 0.0 => {
                bad("SVM needs positive C, epochs and eta0")
            }
            Hyperparams::Mlp(p)
                if !(0.0..1.0).contains(&p.dropout)
                    || p.epochs == 0
                    || p.batch_size == 0
                    || p.learning_rate <= 0.0
                    || p.hidden.contains(&Width::Units(0)) =>
            {
                bad("MLP needs dropout in [0,1) and positive epochs, batch size, rate and widths")
            }
            Hyperparams::Gbdt(p) if p.n_rounds == 0 || p.learning_rate <= 0.0 || p.max_bins < 2 => {
                bad("GBDT needs positive n_rounds, learning_rate and max_bins >= 2")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Learned {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    AdaBoost(AdaBoost),
    Knn(Knn),
    LinearSvm(LinearSvm),
    Mlp(Mlp),
    Gbdt(Gbdt),
}

/// A fitted classifier; immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_classes: usize,
    pub train_seed: u64,
    pub learned: Learned,
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fit a model of `hp.kind()` on `data`.
pub fn train(hp: &Hyperparams, data: &Dataset, seed: u64) -> Result<TrainedModel> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if data.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in training features".into()));
    }
    let present = data.class_counts().iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::InvalidArgument(format!(
            "training set has {present} class(es); need at least 2"
        )));
    }
    let (x, y, k) = (data.x.view(), data.y.as_slice(), data.n_classes());
    let learned = match hp {
        Hyperparams::DecisionTree(p) => {
            Learned::DecisionTree(DecisionTree::fit(x, y, &vec![1.0; y.len()], k, p, seed))
        }
        Hyperparams::RandomForest(p) => Learned::RandomForest(RandomForest::fit(x, y, k, p, seed)),
        Hyperparams::AdaBoost(p) => Learned::AdaBoost(AdaBoost::fit(x, y, k, p, seed)),
        Hyperparams::Knn(p) => Learned::Knn(Knn::fit(x, y, k, p)),
        Hyperparams::LinearSvm(p) => Learned::LinearSvm(LinearSvm::fit(x, y, k, p, seed)),
        Hyperparams::Mlp(p) => Learned::Mlp(Mlp::fit(x, y, k, p, seed)),
        Hyperparams::Gbdt(p) => Learned::Gbdt(Gbdt::fit(x, y, k, p)),
    };
    Ok(TrainedModel {
        kind: hp.kind(),
        n_features: data.n_features(),
        n_classes: k,
        train_seed: seed,
        learned,
    })
}

impl TrainedModel {
    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.n_features {
            return Err(Error::shape(
                format!("{} feature columns", self.n_features),
                format!("{got} columns"),
            ));
        }
        Ok(())
    }

    /// Class probabilities, `[row][class]`; every row sums to one.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        Ok(match &self.learned {
            Learned::DecisionTree(t) => {
                let mut out = Array2::zeros((x.nrows(), self.n_classes));
                for (i, row) in x.outer_iter().enumerate() {
                    out.row_mut(i).assign(&ArrayView1::from(t.leaf_dist(row)));
                }
                out
            }
            Learned::RandomForest(m) => m.predict_proba(x),
            Learned::AdaBoost(m) => m.predict_proba(x),
            Learned::Knn(m) => m.predict_proba(x),
            Learned::LinearSvm(m) => m.predict_proba(x),
            Learned::Mlp(m) => m.predict_proba(x),
            Learned::Gbdt(m) => m.predict_proba(x),
        })
    }

    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.outer_iter().map(|r| argmax(&r.to_vec())).collect())
    }

    pub fn as_mlp(&self) -> Option<&Mlp> {
        match &self.learned {
            Learned::Mlp(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_forest(&self) -> Option<&RandomForest> {
        match &self.learned {
            Learned::RandomForest(m) => Some(m),
            _ => None,
        }
    }

    pub fn require_mlp(&self, capability: &str) -> Result<&Mlp> {
        self.as_mlp().ok_or_else(|| Error::Capability {
            kind: self.kind.to_string(),
            capability: capability.to_string(),
        })
    }

    /// Gradient of the pre-softmax logit of `class` with respect to the input.
    pub fn input_gradient(&self, x: ArrayView1<f64>, class: usize) -> Result<Array1<f64>> {
        let mlp = self.require_mlp("input gradients")?;
        self.check_width(x.len())?;
        if class >= self.n_classes {
            return Err(Error::InvalidArgument(format!("class {class} out of range")));
        }
        Ok(mlp.input_gradient(x, class))
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mlp = self.require_mlp("logits")?;
        self.check_width(x.ncols())?;
        Ok(mlp.logits(x))
    }

    pub fn write_artifact(&self, mut out: impl Write) -> Result<()> {
        let json = serde_json::to_string(self)?;
        let io = |e| Error::Artifact(format!("write failed: {e}"));
        writeln!(out, "{ARTIFACT_MAGIC}").map_err(io)?;
        writeln!(out, "version {ARTIFACT_VERSION}").map_err(io)?;
        writeln!(out, "kind {}", self.kind).map_err(io)?;
        writeln!(out, "{json}").map_err(io)?;
        Ok(())
    }

    pub fn read_artifact(input: impl std::io::Read) -> Result<TrainedModel> {
        let mut lines = BufReader::new(input).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Artifact(format!("truncated: missing {what}")))?
                .map_err(|e| Error::Artifact(e.to_string()))
        };
        if next("magic")?.trim() != ARTIFACT_MAGIC {
            return Err(Error::Artifact("not a model artifact (bad magic)".into()));
        }
        let version = next("version")?;
        let version: u32 = version
            .trim()
            .strip_prefix("version ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Artifact(format!("bad version line `{version}`")))?;
        if version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!("unsupported version {version}")));
        }
        let kind_line = next("kind")?;
        let kind: ModelKind = kind_line
            .trim()
            .strip_prefix("kind ")
            .ok_or_else(|| Error::Artifact(format!("bad kind line `{kind_line}`")))?
            .parse()?;
        let model: TrainedModel = serde_json::from_str(&next("payload")?)?;
        if model.kind != kind {
            return Err(Error::Artifact(format!(
                "header says {kind}, payload holds {}",
                model.kind
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_artifact(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_artifact(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdata::{synth_planted, FeatureSchema};
    use ndarray::array;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn single_class_training_fails() {
        let schema = FeatureSchema::new(vec!["a".into()], "l", vec!["x".into(), "y".into()]).unwrap();
        let d = Dataset::new(array![[1.0], [2.0]], vec![0, 0], schema).unwrap();
        for kind in ModelKind::ALL {
            assert!(train(&Hyperparams::default_for(kind), &d, 0).is_err());
        }
    }

    #[test]
    fn gradient_capability_error() {
        let d = synth_planted(60, 3, 2, 2, 0).unwrap();
        let m = train(&Hyperparams::Knn(KnnParams::default()), &d, 0).unwrap();
        assert!(matches!(
            m.input_gradient(d.x.row(0), 0),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let d = synth_planted(60, 3, 2, 2, 0).unwrap();
        let m = train(&Hyperparams::Knn(KnnParams::default()), &d, 0).unwrap();
        assert!(matches!(m.predict_proba(array![[1.0, 2.0]].view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn artifact_rejects_bad_magic_and_kind() {
        assert!(TrainedModel::read_artifact("nope\n".as_bytes()).is_err());
        let d = synth_planted(60, 3, 2, 2, 0).unwrap();
        let m = train(&Hyperparams::Knn(KnnParams { k: 3 }), &d, 0).unwrap();
        let mut buf = Vec::new();
        m.write_artifact(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("kind Knn", "kind Gbdt");
        assert!(matches!(
            TrainedModel::read_artifact(text.as_bytes()),
            Err(Error::Artifact(_))
        ));
    }
}
