//! Feature schemas and their plain-text file format.
//!
//! A schema file is a list of `key = value` lines; `#` starts a comment.
//!
//! ```text
//! label_column = Label
//! class = Normal
//! class = DoS
//! feature = Destination Port
//! categorical = PROTOCOL_MAP
//! ipv4 = IPV4_SRC_ADDR
//! label = BENIGN => Normal
//! label = DoS Hulk => DoS
//! ```
//!
//! `class` lines fix the class order (index = position). `feature`,
//! `categorical` and `ipv4` lines all declare a feature column, in order;
//! the latter two select a non-numeric encoding. `label` lines map a raw
//! label string onto a class name; a raw label equal to a class name always
//! maps to that class. The raw label `<empty>` stands for an empty cell.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMPTY_LABEL: &str = "<empty>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnEncoding {
    Numeric,
    /// Distinct strings are coded 0, 1, ... in sorted order.
    Categorical,
    /// Dotted-quad address read as a 32-bit integer.
    Ipv4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub feature_names: Vec<String>,
    pub label_column: String,
    /// Raw label string -> class index.
    pub label_map: BTreeMap<String, usize>,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub encodings: BTreeMap<String, ColumnEncoding>,
}

impl FeatureSchema {
    /// A schema with numeric features and identity label mapping.
    pub fn new(
        feature_names: Vec<String>,
        label_column: impl Into<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let schema = FeatureSchema {
            feature_names,
            label_column: label_column.into(),
            label_map: BTreeMap::new(),
            class_names,
            encodings: BTreeMap::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn encoding(&self, feature: &str) -> ColumnEncoding {
        self.encodings
            .get(feature)
            .copied()
            .unwrap_or(ColumnEncoding::Numeric)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Resolve a raw label cell to a class index.
    pub fn map_label(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        let key = if raw.is_empty() { EMPTY_LABEL } else { raw };
        self.label_map
            .get(key)
            .copied()
            .or_else(|| self.class_index(key))
    }

    /// Index of the benign class: a class named like normal/benign traffic,
    /// otherwise class 0.
    pub fn normal_class(&self) -> usize {
        self.class_names
            .iter()
            .position(|c| {
                let c = c.to_ascii_lowercase();
                c == "normal" || c == "benign"
            })
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{name}`")));
            }
        }
        if seen.contains(self.label_column.as_str()) {
            return Err(Error::Schema(format!(
                "label column `{}` is also listed as a feature",
                self.label_column
            )));
        }
        if self.class_names.is_empty() {
            return Err(Error::Schema("no classes declared".into()));
        }
        let mut class_seen = HashSet::new();
        for c in &self.class_names {
            if !class_seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("duplicate class `{c}`")));
            }
        }
        for (raw, &idx) in &self.label_map {
            if idx >= self.class_names.len() {
                return Err(Error::Schema(format!(
                    "label `{raw}` maps to class index {idx}, only {} classes",
                    self.class_names.len()
                )));
            }
        }
        for name in self.encodings.keys() {
            if !seen.contains(name.as_str()) {
                return Err(Error::Schema(format!(
                    "encoding declared for unknown feature `{name}`"
                )));
            }
        }
        Ok(())
    }

    /// Schema restricted to the given feature indices, in that order.
    pub fn select_features(&self, features: &[usize]) -> FeatureSchema {
        let feature_names: Vec<String> = features
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        let encodings = self
            .encodings
            .iter()
            .filter(|(k, _)| feature_names.contains(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        FeatureSchema {
            feature_names,
            label_column: self.label_column.clone(),
            label_map: self.label_map.clone(),
            class_names: self.class_names.clone(),
            encodings,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut label_column = None;
        let mut features = Vec::new();
        let mut encodings = BTreeMap::new();
        let mut classes = Vec::new();
        let mut raw_map: Vec<(String, String, usize)> = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            // `label = a => b` has a second `=` inside the value
            let value = value.trim();
            match key {
                "label_column" => label_column = Some(value.to_string()),
                "class" => classes.push(value.to_string()),
                "feature" => features.push(value.to_string()),
                "categorical" => {
                    features.push(value.to_string());
                    encodings.insert(value.to_string(), ColumnEncoding::Categorical);
                }
                "ipv4" => {
                    features.push(value.to_string());
                    encodings.insert(value.to_string(), ColumnEncoding::Ipv4);
                }
                "label" => {
                    let (raw, class) = value.rsplit_once("=>").ok_or_else(|| {
                        Error::Schema(format!(
                            "line {}: expected `label = <raw> => <class>`",
                            lineno + 1
                        ))
                    })?;
                    raw_map.push((raw.trim().to_string(), class.trim().to_string(), lineno + 1));
                }
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }

        let label_column =
            label_column.ok_or_else(|| Error::Schema("missing `label_column`".into()))?;
        let mut label_map = BTreeMap::new();
        for (raw, class, lineno) in raw_map {
            let idx = classes.iter().position(|c| *c == class).ok_or_else(|| {
                Error::Schema(format!("line {lineno}: label maps to undeclared class `{class}`"))
            })?;
            label_map.insert(raw, idx);
        }
        let schema = FeatureSchema {
            feature_names: features,
            label_column,
            label_map,
            class_names: classes,
            encodings,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "label_column = {}", self.label_column);
        for c in &self.class_names {
            let _ = writeln!(out, "class = {c}");
        }
        for f in &self.feature_names {
            let key = match self.encoding(f) {
                ColumnEncoding::Numeric => "feature",
                ColumnEncoding::Categorical => "categorical",
                ColumnEncoding::Ipv4 => "ipv4",
            };
            let _ = writeln!(out, "{key} = {f}");
        }
        for (raw, &idx) in &self.label_map {
            let _ = writeln!(out, "label = {raw} => {}", self.class_names[idx]);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
