use std::collections::HashSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Remove exact duplicate rows (all features and the label), keeping the
/// first occurrence, then shuffle the survivors with `seed`.
/// Returns the new dataset and the number of rows removed.
pub fn deduplicate_and_shuffle(d: &Dataset, seed: u64) -> (Dataset, usize) {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(d.n_samples());
    let mut keep = Vec::with_capacity(d.n_samples());
    for (i, row) in d.x.outer_iter().enumerate() {
        let mut key: Vec<u64> = row
            .iter()
            // +0.0 and -0.0 compare equal, so they must hash equal
            .map(|&v| if v == 0.0 { 0 } else { v.to_bits() })
            .collect();
        key.push(d.y[i] as u64);
        if seen.insert(key) {
            keep.push(i);
        }
    }
    let removed = d.n_samples() - keep.len();
    keep.shuffle(&mut seed::rng(seed));
    (d.select_rows(&keep), removed)
}

/// Duplicate randomly chosen rows of every minority class (with
/// replacement) until all classes match the majority count. Added rows are
/// appended after the originals, class by class.
pub fn oversample_random(d: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = d.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "class `{}` has no samples to oversample",
            d.schema.class_names[c]
        )));
    }
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, &c) in d.y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut rows: Vec<usize> = (0..d.n_samples()).collect();
    for (c, members) in by_class.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(seed, c as u64));
        for _ in members.len()..target {
            rows.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(d.select_rows(&rows))
}

/// Per-feature min/max fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxParams {
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot fit min-max on zero rows".into()));
        }
        let mins = x
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let maxs = x
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(MinMaxParams { mins, maxs })
    }

    /// `(v - min) / (max - min)`; a column constant on the training data
    /// maps to 0 everywhere.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.mins[j], self.maxs[j]);
            let span = hi - lo;
            if span > 0.0 {
                col.mapv_inplace(|v| (v - lo) / span);
            } else {
                col.fill(0.0);
            }
        }
        out
    }
}

/// Fit min-max scaling on `train` and apply the same parameters to `others`.
pub fn minmax_fit_apply(
    train: &Dataset,
    others: &[&Dataset],
) -> Result<(Dataset, Vec<Dataset>, MinMaxParams)> {
    let params = MinMaxParams::fit(&train.x)?;
    let scale = |d: &Dataset| Dataset {
        x: params.apply(&d.x),
        y: d.y.clone(),
        schema: d.schema.clone(),
    };
    let scaled_train = scale(train);
    let scaled_others = others.iter().map(|d| scale(d)).collect();
    Ok((scaled_train, scaled_others, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.70,
            seed: 0,
        }
    }
}

/// Per-class allocation of `total` slots proportional to `counts`
/// (largest remainder; ties go to the lower class index).
fn allocate(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 * total as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    alloc
}

fn class_members(d: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, &c) in d.y.iter().enumerate() {
        by_class[c].push(i);
    }
    by_class
}

/// Seeded stratified split with `round(fraction * n)` training rows.
pub fn split_train_test(d: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = d.n_samples();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows to split, got {n}")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut by_class = class_members(d);
    let alloc = allocate(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), n_train);
    let mut rng = seed::rng(spec.seed);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (members, &k) in by_class.iter_mut().zip(&alloc) {
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select_rows(&train), d.select_rows(&test)))
}

/// Seeded stratified subsample of `n` rows (all rows when `n >= len`).
/// Row order of the source is preserved.
pub fn stratified_subsample(d: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= d.n_samples() {
        return d.clone();
    }
    let mut by_class = class_members(d);
    let alloc = allocate(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), n);
    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n);
    for (members, &k) in by_class.iter_mut().zip(&alloc) {
        members.shuffle(&mut rng);
        rows.extend_from_slice(&members[..k]);
    }
    rows.sort_unstable();
    d.select_rows(&rows)
}
