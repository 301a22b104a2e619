//! Kernel SHAP and a brute-force Shapley oracle.
//!
//! The value of a coalition `S` is the mean model output over the
//! background rows with the features in `S` taken from the explained
//! sample and the rest left at the background values.

use std::collections::HashMap;

use itertools::Itertools;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::{BackgroundSet, OutputFn};
use crate::error::{Error, Result};
use crate::seed;

/// Largest feature count for complete coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 25;
pub const MAX_ORACLE_FEATURES: usize = 12;
const RIDGE: f64 = 1e-3;
const MAX_BATCH_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coalitions {
    /// Every non-trivial coalition (exact).
    All,
    Sampled(usize),
}

impl std::str::FromStr for Coalitions {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Coalitions::All);
        }
        s.parse()
            .map(Coalitions::Sampled)
            .map_err(|_| Error::InvalidArgument(format!("coalitions must be `all` or a count, got `{s}`")))
    }
}

impl std::fmt::Display for Coalitions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coalitions::All => f.write_str("all"),
            Coalitions::Sampled(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CoalitionsRepr {
    Count(usize),
    Text(String),
}

impl Serialize for Coalitions {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coalitions::All => CoalitionsRepr::Text("all".into()),
            Coalitions::Sampled(n) => CoalitionsRepr::Count(*n),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coalitions {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match CoalitionsRepr::deserialize(d)? {
            CoalitionsRepr::Count(n) => Ok(Coalitions::Sampled(n)),
            CoalitionsRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Attributions for one sample: `phi[class][feature]`, `base[class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    pub phi: Array2<f64>,
    pub base: Array1<f64>,
    pub flags: Vec<String>,
}

/// Mean output per mask, `[mask][output]`.
fn coalition_values(
    f: &dyn OutputFn,
    x: ArrayView1<f64>,
    bg: &BackgroundSet,
    masks: &[Vec<bool>],
) -> Result<Array2<f64>> {
    let b = bg.len();
    let d = x.len();
    let mut out = Array2::zeros((masks.len(), f.n_outputs()));
    let per_chunk = (MAX_BATCH_ROWS / b).max(1);
    for (ci, chunk) in masks.chunks(per_chunk).enumerate() {
        let mut batch = Array2::zeros((chunk.len() * b, d));
        for (mi, mask) in chunk.iter().enumerate() {
            for r in 0..b {
                let mut row = batch.row_mut(mi * b + r);
                row.assign(&bg.data.row(r));
                for j in (0..d).filter(|&j| mask[j]) {
                    row[j] = x[j];
                }
            }
        }
        let y = f.eval(batch.view())?;
        for mi in 0..chunk.len() {
            let mean = y
                .slice(ndarray::s![mi * b..(mi + 1) * b, ..])
                .mean_axis(ndarray::Axis(0))
                .expect("non-empty background");
            out.row_mut(ci * per_chunk + mi).assign(&mean);
        }
    }
    Ok(out)
}

fn check_dims(f: &dyn OutputFn, x: ArrayView1<f64>, bg: &BackgroundSet) -> Result<()> {
    if x.len() != f.n_inputs() {
        return Err(Error::shape(format!("{} features", f.n_inputs()), format!("{}", x.len())));
    }
    if bg.data.ncols() != x.len() {
        return Err(Error::shape(
            format!("background with {} columns", x.len()),
            format!("{}", bg.data.ncols()),
        ));
    }
    if bg.is_empty() {
        return Err(Error::InvalidArgument("empty background set".into()));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Total Shapley-kernel weight carried by coalitions of size `s`.
fn size_weight(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (s * (n - s)) as f64
}

fn mask_of(n: usize, members: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut m = vec![false; n];
    for j in members {
        m[j] = true;
    }
    m
}

fn all_masks(n: usize) -> Vec<(Vec<bool>, f64)> {
    let mut out = Vec::with_capacity((1usize << n) - 2);
    for s in 1..n {
        let w = size_weight(n, s) / binomial(n, s);
        for c in (0..n).combinations(s) {
            out.push((mask_of(n, c), w));
        }
    }
    out
}

/// Coalition sizes are visited in complementary pairs from the outside in;
/// a pair is enumerated completely while the remaining budget covers it in
/// proportion to its kernel weight, the rest is drawn at random (each draw
/// paired with its complement).
fn sampled_masks(n: usize, budget: usize, rng: &mut seed::Rng) -> Vec<(Vec<bool>, f64)> {
    let total: f64 = (1..n).map(|s| size_weight(n, s)).sum();
    let w = |s: usize| size_weight(n, s) / total;
    let mut out = Vec::new();
    let mut left = budget as f64;
    let mut weight_left = 1.0;
    let mut next = 1;
    while next <= n / 2 {
        let sizes: Vec<usize> = if 2 * next == n { vec![next] } else { vec![next, n - next] };
        let count: f64 = sizes.iter().map(|&s| binomial(n, s)).sum();
        let pair_w: f64 = sizes.iter().map(|&s| w(s)).sum();
        if weight_left <= 0.0 || left * pair_w / weight_left < count - 1e-9 {
            break;
        }
        for &s in &sizes {
            let mw = w(s) / binomial(n, s);
            for c in (0..n).combinations(s) {
                out.push((mask_of(n, c), mw));
            }
        }
        left -= count;
        weight_left -= pair_w;
        next += 1;
    }
    if next > n / 2 || left < 1.0 {
        return out;
    }
    let pairs: Vec<usize> = (next..=n / 2).collect();
    let pair_weights: Vec<f64> = pairs
        .iter()
        .map(|&s| if 2 * s == n { w(s) } else { 2.0 * w(s) })
        .collect();
    let pw_total: f64 = pair_weights.iter().sum();
    let mut counts: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut order: Vec<Vec<bool>> = Vec::new();
    let target = left as usize;
    let max_draws = 4 * target + 100;
    for _ in 0..max_draws {
        if order.len() >= target {
            break;
        }
        let mut u = rng.random::<f64>() * pw_total;
        let mut pick = pairs.len() - 1;
        for (i, pw) in pair_weights.iter().enumerate() {
            if u < *pw {
                pick = i;
                break;
            }
            u -= pw;
        }
        let s = pairs[pick];
        let mask = mask_of(n, sample_indices(rng, n, s));
        let comp: Vec<bool> = mask.iter().map(|b| !b).collect();
        for m in [mask, comp] {
            if let Some(c) = counts.get_mut(&m) {
                *c += 1.0;
            } else {
                counts.insert(m.clone(), 1.0);
                order.push(m);
            }
        }
    }
    let drawn: f64 = counts.values().sum();
    for m in order {
        let c = counts[&m];
        out.push((m, weight_left * c / drawn));
    }
    out
}

/// Weighted least squares with `sum(phi) = delta` enforced by eliminating
/// the last feature.
fn solve_constrained(
    masks: &[(Vec<bool>, f64)],
    values: &Array2<f64>,
    v0: &Array1<f64>,
    delta: &Array1<f64>,
    flags: &mut Vec<String>,
) -> Result<Array2<f64>> {
    let n = masks[0].0.len();
    let k = v0.len();
    let mut phi = Array2::zeros((k, n));
    if n == 1 {
        phi.column_mut(0).assign(delta);
        return Ok(phi);
    }
    let total_w: f64 = masks.iter().map(|(_, w)| w).sum();
    if !(total_w.is_finite() && total_w > 0.0) {
        return Err(Error::Numerical("degenerate coalition weights".into()));
    }
    let m = n - 1;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, k);
    let mut row = vec![0.0; m];
    for (mi, (mask, w)) in masks.iter().enumerate() {
        let last = if mask[m] { 1.0 } else { 0.0 };
        for j in 0..m {
            row[j] = (if mask[j] { 1.0 } else { 0.0 }) - last;
        }
        for i in 0..m {
            if row[i] == 0.0 {
                continue;
            }
            let wi = w * row[i];
            for j in 0..m {
                a[(i, j)] += wi * row[j];
            }
            for c in 0..k {
                let y = values[[mi, c]] - v0[c] - last * delta[c];
                rhs[(i, c)] += wi * y;
            }
        }
    }
    let chol = match a.clone().cholesky() {
        Some(ch) => ch,
        None => {
            let scale = (0..m).map(|i| a[(i, i)]).sum::<f64>() / m as f64;
            let mut reg = a;
            for i in 0..m {
                reg[(i, i)] += RIDGE * scale.max(1e-12);
            }
            flags.push("kernel shap system regularized".into());
            reg.cholesky()
                .ok_or_else(|| Error::Numerical("kernel shap system is singular".into()))?
        }
    };
    let sol = chol.solve(&rhs);
    for c in 0..k {
        let mut acc = 0.0;
        for j in 0..m {
            phi[[c, j]] = sol[(j, c)];
            acc += sol[(j, c)];
        }
        phi[[c, m]] = delta[c] - acc;
    }
    Ok(phi)
}

/// Kernel SHAP attributions of every output of `f` at `x`.
pub fn kernel_shap(
    f: &dyn OutputFn,
    x: ArrayView1<f64>,
    bg: &BackgroundSet,
    coalitions: Coalitions,
    seed: u64,
) -> Result<ShapValues> {
    check_dims(f, x, bg)?;
    let n = x.len();
    let masks = match coalitions {
        Coalitions::All if n > MAX_EXACT_FEATURES => {
            return Err(Error::InvalidArgument(format!(
                "complete enumeration refused for {n} features (limit {MAX_EXACT_FEATURES})"
            )))
        }
        Coalitions::All => all_masks(n),
        Coalitions::Sampled(c) if c < n + 2 => {
            return Err(Error::InvalidArgument(format!(
                "{c} coalitions is too few for {n} features (need at least {})",
                n + 2
            )))
        }
        Coalitions::Sampled(c) => sampled_masks(n, c, &mut seed::rng(seed)),
    };
    let ends = coalition_values(f, x, bg, &[vec![false; n], vec![true; n]])?;
    let v0 = ends.row(0).to_owned();
    let delta = &ends.row(1) - &v0;
    let mut flags = Vec::new();
    let phi = if masks.is_empty() {
        // a single feature has no proper coalitions
        let mut p = Array2::zeros((v0.len(), n));
        p.column_mut(0).assign(&delta);
        p
    } else {
        let only: Vec<Vec<bool>> = masks.iter().map(|(m, _)| m.clone()).collect();
        let values = coalition_values(f, x, bg, &only)?;
        solve_constrained(&masks, &values, &v0, &delta, &mut flags)?
    };
    Ok(ShapValues { phi, base: v0, flags })
}

/// Shapley values by the subset-sum definition; exponential, for tests.
pub fn exact_shapley_oracle(f: &dyn OutputFn, x: ArrayView1<f64>, bg: &BackgroundSet) -> Result<ShapValues> {
    check_dims(f, x, bg)?;
    let n = x.len();
    if n > MAX_ORACLE_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to {MAX_ORACLE_FEATURES} features, got {n}"
        )));
    }
    let masks: Vec<Vec<bool>> = (0..1usize << n)
        .map(|bits| (0..n).map(|j| bits >> j & 1 == 1).collect())
        .collect();
    let v = coalition_values(f, x, bg, &masks)?;
    Ok(ShapValues {
        phi: shapley_from_values(n, |bits, c| v[[bits, c]], v.ncols()),
        base: v.row(0).to_owned(),
        flags: Vec::new(),
    })
}

/// `phi[c][j] = sum_{S not containing j} |S|!(n-|S|-1)!/n! (v(S+j) - v(S))`
/// for a value function indexed by subset bitmask.
pub fn shapley_from_values(n: usize, v: impl Fn(usize, usize) -> f64, n_outputs: usize) -> Array2<f64> {
    let fact = |k: usize| (1..=k).fold(1.0, |a, i| a * i as f64);
    let weights: Vec<f64> = (0..n).map(|s| fact(s) * fact(n - s - 1) / fact(n)).collect();
    let mut phi = Array2::zeros((n_outputs, n));
    for j in 0..n {
        for bits in (0..1usize << n).filter(|b| b >> j & 1 == 0) {
            let w = weights[bits.count_ones() as usize];
            for c in 0..n_outputs {
                phi[[c, j]] += w * (v(bits | 1 << j, c) - v(bits, c));
            }
        }
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::FnOutput;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn bg0(d: usize) -> BackgroundSet {
        BackgroundSet::new(Array2::zeros((1, d)))
    }

    #[test]
    fn linear_logit_example() {
        let f = FnOutput::new(2, 1, |x| x.map_axis(ndarray::Axis(1), |r| 2.0 * r[0] + 3.0 * r[1]).insert_axis(ndarray::Axis(1)));
        let s = kernel_shap(&f, array![1.0, 1.0].view(), &bg0(2), Coalitions::All, 0).unwrap();
        assert_abs_diff_eq!(s.phi[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi[[0, 1]], 3.0, epsilon = 1e-12);
        assert_eq!(s.base[0], 0.0);
    }

    #[test]
    fn product_example() {
        let f = FnOutput::new(2, 1, |x| x.map_axis(ndarray::Axis(1), |r| r[0] * r[1]).insert_axis(ndarray::Axis(1)));
        let s = kernel_shap(&f, array![1.0, 1.0].view(), &bg0(2), Coalitions::All, 0).unwrap();
        assert_abs_diff_eq!(s.phi[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi[[0, 1]], 0.5, epsilon = 1e-12);
        let o = exact_shapley_oracle(&f, array![1.0, 1.0].view(), &bg0(2)).unwrap();
        assert_abs_diff_eq!(o.phi[[0, 0]], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        let f = FnOutput::new(3, 1, |x| x.map_axis(ndarray::Axis(1), |r| r[0] * r[1] + r[0]).insert_axis(ndarray::Axis(1)));
        let s = kernel_shap(&f, array![1.0, 2.0, 5.0].view(), &bg0(3), Coalitions::All, 0).unwrap();
        assert_abs_diff_eq!(s.phi[[0, 2]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn refuses_large_enumeration_and_small_budgets() {
        let f = FnOutput::new(30, 1, |x| x.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1)));
        let x = Array1::zeros(30);
        assert!(kernel_shap(&f, x.view(), &bg0(30), Coalitions::All, 0).is_err());
        assert!(kernel_shap(&f, x.view(), &bg0(30), Coalitions::Sampled(31), 0).is_err());
        assert!(exact_shapley_oracle(&f, x.view(), &bg0(30)).is_err());
    }

    #[test]
    fn sampled_with_large_budget_matches_exact() {
        let f = FnOutput::new(5, 2, |x| {
            Array2::from_shape_fn((x.nrows(), 2), |(i, c)| {
                let r = x.row(i);
                if c == 0 { r[0] * r[1] + r[2].sin() } else { r[3] * r[4] - r[0] }
            })
        });
        let x = array![0.3, 0.9, -0.2, 1.5, 0.7];
        let bg = BackgroundSet::new(Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.37).cos()));
        let exact = exact_shapley_oracle(&f, x.view(), &bg).unwrap();
        let s = kernel_shap(&f, x.view(), &bg, Coalitions::Sampled(2048), 3).unwrap();
        for (a, b) in s.phi.iter().zip(exact.phi.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn sampled_masks_respect_budget_and_weight() {
        let mut rng = seed::rng(1);
        let masks = sampled_masks(40, 1000, &mut rng);
        assert!(masks.len() <= 1002);
        let total: f64 = masks.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        // sizes 1 and 39 are enumerated completely
        assert_eq!(masks.iter().filter(|(m, _)| m.iter().filter(|b| **b).count() == 1).count(), 40);
    }
}
