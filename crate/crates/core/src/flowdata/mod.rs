//! Flow-record ingestion and preprocessing: CSV loading, duplicate removal,
//! random oversampling, min-max scaling and train/test splitting.

mod csv_io;
mod preprocess;
mod schema;
mod synth;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{infer_schema, infer_schema_files, load_csv, load_csv_files, write_dataset_csv, NonFinitePolicy};
pub use preprocess::{
    deduplicate_and_shuffle, minmax_fit_apply, oversample_random, split_train_test,
    stratified_subsample, MinMaxParams, SplitSpec,
};
pub use schema::{ColumnEncoding, FeatureSchema, EMPTY_LABEL};
pub use synth::{synth_planted, SynthSpec};

/// Feature matrix plus class labels. Rows of `x` line up with `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub schema: FeatureSchema,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, schema: FeatureSchema) -> Result<Self> {
        let d = Dataset { x, y, schema };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::shape(
                format!("{} labels", self.x.nrows()),
                format!("{} labels", self.y.len()),
            ));
        }
        if self.x.ncols() != self.schema.n_features() {
            return Err(Error::shape(
                format!("{} feature columns", self.schema.n_features()),
                format!("{} columns", self.x.ncols()),
            ));
        }
        if let Some(v) = self.x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite feature value {v}")));
        }
        let k = self.schema.n_classes();
        if let Some(&c) = self.y.iter().find(|&&c| c >= k) {
            return Err(Error::Input(format!("label {c} out of range for {k} classes")));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Keep only the given feature columns, in the given order.
    pub fn select_features(&self, features: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(1), features),
            y: self.y.clone(),
            schema: self.schema.select_features(features),
        }
    }
}

/// Bookkeeping from ingestion through scaling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub duplicates_removed: usize,
    pub nonfinite_cells_handled: usize,
    pub rows_dropped_nonfinite: usize,
    pub per_class_counts_before_oversample: BTreeMap<String, usize>,
    pub per_class_counts_after_oversample: BTreeMap<String, usize>,
    /// Per-feature (min, max) fitted on the training split.
    pub minmax_params: Vec<(String, f64, f64)>,
}

impl PreprocessReport {
    pub fn record_class_counts(d: &Dataset) -> BTreeMap<String, usize> {
        d.schema
            .class_names
            .iter()
            .cloned()
            .zip(d.class_counts())
            .collect()
    }

    /// CSV with header `field,key,value`; scalar fields leave `key` empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["field", "key", "value"])?;
        for (field, v) in [
            ("rows_in", self.rows_in),
            ("duplicates_removed", self.duplicates_removed),
            ("nonfinite_cells_handled", self.nonfinite_cells_handled),
            ("rows_dropped_nonfinite", self.rows_dropped_nonfinite),
        ] {
            w.write_record([field, "", &v.to_string()])?;
        }
        for (c, n) in &self.per_class_counts_before_oversample {
            w.write_record(["class_count_before_oversample", c, &n.to_string()])?;
        }
        for (c, n) in &self.per_class_counts_after_oversample {
            w.write_record(["class_count_after_oversample", c, &n.to_string()])?;
        }
        for (f, lo, hi) in &self.minmax_params {
            w.write_record(["minmax_min", f, &lo.to_string()])?;
            w.write_record(["minmax_max", f, &hi.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut rep = PreprocessReport::default();
        let mut mins: Vec<(String, f64)> = Vec::new();
        let mut maxs: BTreeMap<String, f64> = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let (field, key, value) = (&rec[0], &rec[1], &rec[2]);
            let as_count = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::Input(format!("bad count `{value}` for {field}")))
            };
            let as_real = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("bad value `{value}` for {field}")))
            };
            match field {
                "rows_in" => rep.rows_in = as_count()?,
                "duplicates_removed" => rep.duplicates_removed = as_count()?,
                "nonfinite_cells_handled" => rep.nonfinite_cells_handled = as_count()?,
                "rows_dropped_nonfinite" => rep.rows_dropped_nonfinite = as_count()?,
                "class_count_before_oversample" => {
                    rep.per_class_counts_before_oversample
                        .insert(key.to_string(), as_count()?);
                }
                "class_count_after_oversample" => {
                    rep.per_class_counts_after_oversample
                        .insert(key.to_string(), as_count()?);
                }
                "minmax_min" => mins.push((key.to_string(), as_real()?)),
                "minmax_max" => {
                    maxs.insert(key.to_string(), as_real()?);
                }
                other => return Err(Error::Input(format!("unknown report field `{other}`"))),
            }
        }
        rep.minmax_params = mins
            .into_iter()
            .map(|(f, lo)| {
                let hi = maxs.get(&f).copied().unwrap_or(lo);
                (f, lo, hi)
            })
            .collect();
        Ok(rep)
    }

    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "rows in:                 {}", self.rows_in)?;
        writeln!(out, "duplicates removed:      {}", self.duplicates_removed)?;
        writeln!(out, "non-finite cells:        {}", self.nonfinite_cells_handled)?;
        writeln!(out, "rows dropped (non-fin.): {}", self.rows_dropped_nonfinite)?;
        for (c, n) in &self.per_class_counts_before_oversample {
            let after = self.per_class_counts_after_oversample.get(c).copied().unwrap_or(0);
            writeln!(out, "  {c:<20} {n:>10} -> {after:>10}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn schema2() -> FeatureSchema {
        FeatureSchema::new(vec!["a".into(), "b".into()], "label", vec!["x".into(), "y".into()])
            .unwrap()
    }

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(Dataset::new(array![[1.0, 2.0]], vec![0, 1], schema2()).is_err());
        assert!(Dataset::new(array![[f64::NAN, 2.0]], vec![0], schema2()).is_err());
        assert!(Dataset::new(array![[1.0, 2.0]], vec![2], schema2()).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let mut rep = PreprocessReport {
            rows_in: 10,
            duplicates_removed: 2,
            nonfinite_cells_handled: 1,
            rows_dropped_nonfinite: 1,
            ..Default::default()
        };
        rep.per_class_counts_before_oversample.insert("x".into(), 5);
        rep.per_class_counts_after_oversample.insert("x".into(), 6);
        rep.minmax_params.push(("a".into(), -0.25, 3.5));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        rep.write_csv(&p).unwrap();
        assert_eq!(PreprocessReport::read_csv(&p).unwrap(), rep);
    }
}
