use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::ExplainConfig;
use crate::error::{Error, Result};
use crate::flowdata::{NonFinitePolicy, SynthSpec};
use crate::models::{Hyperparams, MlpParams, ModelKind};
use crate::ranking::{Aggregation, BaselineMethod};

/// Number of selected features; `All` skips selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KValue {
    Count(usize),
    All,
}

impl fmt::Display for KValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KValue::Count(k) => write!(f, "{k}"),
            KValue::All => f.write_str("all"),
        }
    }
}

impl FromStr for KValue {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(KValue::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(KValue::Count(k)),
            _ => Err(Error::InvalidArgument(format!("k must be `all` or a positive count, got `{s}`"))),
        }
    }
}

impl Serialize for KValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KValue::Count(k) => s.serialize_u64(*k as u64),
            KValue::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for KValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(k) => KValue::Count(k).validated().map_err(serde::de::Error::custom),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl KValue {
    fn validated(self) -> Result<Self> {
        match self {
            KValue::Count(0) => Err(Error::InvalidArgument("k must be positive".into())),
            k => Ok(k),
        }
    }

    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            KValue::Count(k) => k,
            KValue::All => n_features,
        }
    }
}

pub fn default_k_values() -> Vec<KValue> {
    vec![KValue::Count(5), KValue::Count(10), KValue::Count(15), KValue::All]
}

/// A named model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: Hyperparams,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, params: Hyperparams) -> Self {
        ModelSpec { name: name.into(), params }
    }

    /// A default-configured model from a short name (RF, ADA, KNN, SVM,
    /// MLP, DNN, GBDT, DT) or a kind name.
    pub fn from_name(name: &str) -> Result<Self> {
        let params = match name.to_ascii_uppercase().as_str() {
            "RF" => Hyperparams::default_for(ModelKind::RandomForest),
            "ADA" => Hyperparams::default_for(ModelKind::AdaBoost),
            "KNN" => Hyperparams::default_for(ModelKind::Knn),
            "SVM" => Hyperparams::default_for(ModelKind::LinearSvm),
            "MLP" => Hyperparams::default_for(ModelKind::Mlp),
            "DNN" => Hyperparams::Mlp(MlpParams::dnn()),
            "GBDT" | "LIGHTGBM" => Hyperparams::default_for(ModelKind::Gbdt),
            "DT" => Hyperparams::default_for(ModelKind::DecisionTree),
            _ => Hyperparams::default_for(name.parse()?),
        };
        Ok(ModelSpec::new(name, params))
    }
}

pub fn default_models() -> Vec<ModelSpec> {
    ["RF", "ADA", "KNN", "SVM", "MLP", "DNN", "GBDT"]
        .iter()
        .map(|n| ModelSpec::from_name(n).expect("built-in model name"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSource {
    Synth(SynthSpec),
    Csv {
        paths: Vec<PathBuf>,
        /// Schema file; inferred from the first CSV when absent.
        #[serde(default)]
        schema: Option<PathBuf>,
        /// Label column used for inference.
        #[serde(default)]
        label_column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    pub nonfinite: NonFinitePolicy,
    /// Stratified subsample size applied right after loading.
    pub subsample: Option<usize>,
    pub train_fraction: f64,
    pub oversample: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synth(SynthSpec::default()),
            nonfinite: NonFinitePolicy::DropRow,
            subsample: None,
            train_fraction: 0.70,
            oversample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodsConfig {
    pub aggregations: Vec<Aggregation>,
    pub baselines: Vec<BaselineMethod>,
    /// Gradient / perturbation methods on the neural network, aggregated by
    /// voting.
    pub xplique: bool,
    pub xplique_model: String,
}

impl Default for MethodsConfig {
    fn default() -> Self {
        MethodsConfig {
            aggregations: Aggregation::ALL.to_vec(),
            baselines: BaselineMethod::ALL.to_vec(),
            xplique: true,
            xplique_model: "DNN".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionBudget {
    pub background: usize,
    pub explain_samples: usize,
    #[serde(flatten)]
    pub explain: ExplainConfig,
}

impl Default for AttributionBudget {
    fn default() -> Self {
        AttributionBudget {
            background: 100,
            explain_samples: 2000,
            explain: ExplainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub k_values: Vec<KValue>,
    pub data: DataConfig,
    pub models: Vec<ModelSpec>,
    pub methods: MethodsConfig,
    pub attribution: AttributionBudget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 42,
            workers: None,
            k_values: default_k_values(),
            data: DataConfig::default(),
            models: default_models(),
            methods: MethodsConfig::default(),
            attribution: AttributionBudget::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn model(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.k_values.is_empty() {
            return err("k_values must not be empty".into());
        }
        if self.models.is_empty() {
            return err("at least one model is required".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return err("model names must be unique".into());
        }
        if !(0.0 < self.data.train_fraction && self.data.train_fraction < 1.0) {
            return err("train_fraction must lie in (0, 1)".into());
        }
        if self.workers == Some(0) {
            return err("workers must be positive".into());
        }
        let needs_attr = !self.methods.aggregations.is_empty() || self.methods.xplique;
        if needs_attr && (self.attribution.explain_samples == 0 || self.attribution.background == 0) {
            return err("attribution-based methods need a positive attribution budget".into());
        }
        if self.methods.xplique {
            match self.model(&self.methods.xplique_model) {
                Some(m) if m.params.kind().is_differentiable() => {}
                Some(_) => return err(format!("model `{}` is not differentiable", self.methods.xplique_model)),
                None => return err(format!("xplique model `{}` is not configured", self.methods.xplique_model)),
            }
        }
        Ok(())
    }

    /// Checks against the loaded feature count.
    pub fn validate_for(&self, n_features: usize) -> Result<()> {
        for k in &self.k_values {
            if let KValue::Count(c) = k {
                if *c > n_features {
                    return Err(Error::Config(format!("k={c} exceeds the {n_features} available features")));
                }
            }
        }
        Ok(())
    }

    /// Every scored selection method name, in report order.
    pub fn method_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.methods.aggregations.iter().map(|a| a.name().to_string()).collect();
        out.extend(self.methods.baselines.iter().map(|b| b.name().to_string()));
        if self.methods.xplique {
            out.push(VOTING.to_string());
        }
        out
    }
}

pub const VOTING: &str = "voting";
