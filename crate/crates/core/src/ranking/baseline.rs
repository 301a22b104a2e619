//! Model-free and forest-based feature rankings used as baselines.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::FeatureRanking;
use crate::error::{Error, Result};
use crate::flowdata::Dataset;
use crate::models::gbdt::{bin_cuts, bin_of};
use crate::models::{ForestParams, RandomForest};

pub const N_BINS: usize = 20;
pub const CORRELATION_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Chi2,
    Correlation,
    Impurity,
    InfoGain,
    KBest,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 5] = [
        BaselineMethod::Chi2,
        BaselineMethod::Correlation,
        BaselineMethod::Impurity,
        BaselineMethod::InfoGain,
        BaselineMethod::KBest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Chi2 => "chi2",
            BaselineMethod::Correlation => "correlation",
            BaselineMethod::Impurity => "impurity",
            BaselineMethod::InfoGain => "infogain",
            BaselineMethod::KBest => "kbest",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "");
        let key = match key.as_str() {
            "chisquare" | "chisquared" => "chi2",
            "featurecorrelation" | "corr" => "correlation",
            "featureimportance" | "rf" => "impurity",
            "informationgain" | "mutualinfo" => "infogain",
            "anova" | "selectkbest" => "kbest",
            other => other,
        }
        .to_string();
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScores {
    pub scores: Vec<f64>,
    pub flags: Vec<String>,
}

fn binned(col: ArrayView1<f64>) -> (Vec<usize>, usize) {
    let cuts = bin_cuts(col, N_BINS);
    (col.iter().map(|&v| bin_of(&cuts, v) as usize).collect(), cuts.len() + 1)
}

fn contingency(col: ArrayView1<f64>, y: &[usize], n_classes: usize) -> (Vec<Vec<f64>>, usize) {
    let (bins, n_bins) = binned(col);
    let mut table = vec![vec![0.0; n_classes]; n_bins];
    for (b, &c) in bins.iter().zip(y) {
        table[*b][c] += 1.0;
    }
    (table, n_bins)
}

fn constant_flag(j: usize, name: &str) -> String {
    format!("feature {j} ({name}) is constant; scored 0")
}

/// Chi-square statistic of the (binned feature x class) contingency table.
pub fn chi2_scores(d: &Dataset) -> BaselineScores {
    let n = d.n_samples() as f64;
    let k = d.n_classes();
    let mut flags = Vec::new();
    let scores = (0..d.n_features())
        .map(|j| {
            let (table, n_bins) = contingency(d.x.column(j), &d.y, k);
            if n_bins < 2 {
                flags.push(constant_flag(j, &d.schema.feature_names[j]));
                return 0.0;
            }
            let col_tot: Vec<f64> = (0..k).map(|c| table.iter().map(|r| r[c]).sum()).collect();
            let mut chi = 0.0;
            for row in &table {
                let row_tot: f64 = row.iter().sum();
                for c in 0..k {
                    let e = row_tot * col_tot[c] / n;
                    if e > 0.0 {
                        chi += (row[c] - e).powi(2) / e;
                    }
                }
            }
            chi
        })
        .collect();
    BaselineScores { scores, flags }
}

fn entropy_bits(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information (bits) between the binned feature and the class.
pub fn info_gain_scores(d: &Dataset) -> BaselineScores {
    let n = d.n_samples() as f64;
    let k = d.n_classes();
    let class_counts = d.class_counts();
    let h_y = entropy_bits(class_counts.iter().map(|&c| c as f64), n);
    let mut flags = Vec::new();
    let scores = (0..d.n_features())
        .map(|j| {
            let (table, n_bins) = contingency(d.x.column(j), &d.y, k);
            if n_bins < 2 {
                flags.push(constant_flag(j, &d.schema.feature_names[j]));
                return 0.0;
            }
            let h_cond: f64 = table
                .iter()
                .map(|row| {
                    let t: f64 = row.iter().sum();
                    if t > 0.0 {
                        t / n * entropy_bits(row.iter().copied(), t)
                    } else {
                        0.0
                    }
                })
                .sum();
            (h_y - h_cond).max(0.0)
        })
        .collect();
    BaselineScores { scores, flags }
}

/// One-way ANOVA F statistic of each feature across classes.
pub fn anova_f_scores(d: &Dataset) -> BaselineScores {
    let n = d.n_samples();
    let k = d.n_classes();
    let counts = d.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    let mut flags = Vec::new();
    let scores = (0..d.n_features())
        .map(|j| {
            let col = d.x.column(j);
            let mean = col.mean().unwrap_or(0.0);
            let mut sums = vec![0.0; k];
            for (v, &c) in col.iter().zip(&d.y) {
                sums[c] += v;
            }
            let means: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect();
            let between: f64 = means
                .iter()
                .zip(&counts)
                .map(|(m, &c)| c as f64 * (m - mean).powi(2))
                .sum();
            let within: f64 = col.iter().zip(&d.y).map(|(v, &c)| (v - means[c]).powi(2)).sum();
            if between == 0.0 && within == 0.0 {
                flags.push(constant_flag(j, &d.schema.feature_names[j]));
                return 0.0;
            }
            if present < 2 || n <= present {
                return 0.0;
            }
            let f = (between / (present - 1) as f64) / (within / (n - present) as f64);
            if f.is_finite() {
                f
            } else {
                f64::MAX
            }
        })
        .collect();
    BaselineScores { scores, flags }
}

fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// |correlation with the class index|, with redundant features (|r| above
/// the threshold against a better feature) moved to the end in pruning
/// order and scored `|r| - 2`.
fn correlation_ranking(d: &Dataset) -> FeatureRanking {
    let y = ndarray::Array1::from_iter(d.y.iter().map(|&c| c as f64));
    let mut flags = Vec::new();
    let score: Vec<f64> = (0..d.n_features())
        .map(|j| match pearson(d.x.column(j), y.view()) {
            Some(r) => r.abs(),
            None => {
                if d.x.column(j).iter().all(|v| *v == d.x[[0, j]]) {
                    flags.push(constant_flag(j, &d.schema.feature_names[j]));
                }
                0.0
            }
        })
        .collect();
    let order = FeatureRanking::from_scores("", &score, &d.schema.feature_names, false).order();
    let mut kept: Vec<usize> = Vec::new();
    let mut pruned: Vec<usize> = Vec::new();
    for j in order {
        let redundant = kept.iter().any(|&i| {
            pearson(d.x.column(i), d.x.column(j)).is_some_and(|r| r.abs() > CORRELATION_THRESHOLD)
        });
        if redundant {
            flags.push(format!("feature {} pruned as redundant", d.schema.feature_names[j]));
            pruned.push(j);
        } else {
            kept.push(j);
        }
    }
    let entries = kept
        .iter()
        .map(|&j| (j, score[j]))
        .chain(pruned.iter().map(|&j| (j, score[j] - 2.0)))
        .collect();
    FeatureRanking {
        method: BaselineMethod::Correlation.name().to_string(),
        entries,
        feature_names: d.schema.feature_names.clone(),
        lower_is_better: false,
        flags,
    }
}

/// Ranking from a statistical baseline computed on `train`.
pub fn baseline_rank(method: BaselineMethod, train: &Dataset, seed: u64) -> Result<FeatureRanking> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("baseline ranking needs training rows".into()));
    }
    let names = &train.schema.feature_names;
    let scored = |s: BaselineScores| {
        let mut r = FeatureRanking::from_scores(method.name(), &s.scores, names, false);
        r.flags = s.flags;
        r
    };
    Ok(match method {
        BaselineMethod::Chi2 => scored(chi2_scores(train)),
        BaselineMethod::InfoGain => scored(info_gain_scores(train)),
        BaselineMethod::KBest => scored(anova_f_scores(train)),
        BaselineMethod::Correlation => correlation_ranking(train),
        BaselineMethod::Impurity => {
            let rf = RandomForest::fit(train.x.view(), &train.y, train.n_classes(), &ForestParams::default(), seed);
            let imp = rf.feature_importances(train.n_features());
            FeatureRanking::from_scores(method.name(), &imp, names, false)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdata::{FeatureSchema, SynthSpec};
    use ndarray::Array2;
    use rand::Rng;

    fn dataset(x: Array2<f64>, y: Vec<usize>, k: usize) -> Dataset {
        let names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        let classes = (0..k).map(|c| format!("c{c}")).collect();
        let schema = FeatureSchema::new(names, "label", classes).unwrap();
        Dataset::new(x, y, schema).unwrap()
    }

    #[test]
    fn label_copy_is_maximal() {
        let y: Vec<usize> = (0..200).map(|i| (i % 3 == 0) as usize).collect();
        let x = Array2::from_shape_fn((200, 2), |(i, j)| if j == 0 { y[i] as f64 } else { (i % 7) as f64 });
        let d = dataset(x, y.clone(), 2);
        let chi = chi2_scores(&d).scores;
        assert!((chi[0] - 200.0).abs() < 1e-9, "{}", chi[0]);
        let p1 = y.iter().filter(|&&c| c == 1).count() as f64 / 200.0;
        let h = -(p1 * p1.log2() + (1.0 - p1) * (1.0 - p1).log2());
        assert!((info_gain_scores(&d).scores[0] - h).abs() < 1e-12);
    }

    #[test]
    fn noise_has_little_information() {
        let mut rng = crate::seed::rng(11);
        let n = 10_000;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>());
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let ig = info_gain_scores(&dataset(x, y, 2)).scores[0];
        assert!(ig <= 0.05, "{ig}");
    }

    #[test]
    fn duplicate_column_is_pruned() {
        let d = SynthSpec { n_samples: 500, n_features: 4, n_informative: 2, n_classes: 2, seed: 3, ..SynthSpec::default() }
            .generate()
            .unwrap();
        let mut x = Array2::zeros((500, 5));
        x.slice_mut(ndarray::s![.., ..4]).assign(&d.x);
        x.column_mut(4).assign(&d.x.column(0));
        let dup = dataset(x, d.y.clone(), 2);
        let r = baseline_rank(BaselineMethod::Correlation, &dup, 0).unwrap();
        assert!(r.is_permutation());
        let last = r.entries.last().unwrap().0;
        assert!(last == 0 || last == 4);
        assert!(r.entries.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn constant_feature_is_flagged() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let d = dataset(x, y, 2);
        for m in BaselineMethod::ALL {
            let r = baseline_rank(m, &d, 1).unwrap();
            assert!(r.is_permutation(), "{m}");
            if m != BaselineMethod::Impurity {
                assert!(!r.flags.is_empty(), "{m}");
            }
        }
    }

    #[test]
    fn anova_separates_shifted_feature() {
        let y: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((100, 2), |(i, j)| if j == 0 { y[i] as f64 * 3.0 + (i % 5) as f64 * 0.1 } else { (i % 5) as f64 });
        let r = baseline_rank(BaselineMethod::KBest, &dataset(x, y, 2), 0).unwrap();
        assert_eq!(r.order()[0], 0);
    }
}
