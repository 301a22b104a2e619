//! Gradient-boosted regression trees with a softmax objective.
//!
//! Features are bucketed once into at most `max_bins` quantile bins; split
//! search scans per-node gradient histograms over those bins (exact greedy
//! over the subsampled thresholds).

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub max_bins: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 5,
            min_samples_leaf: 20,
            lambda: 1.0,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub init: Vec<f64>,
    /// `[round][class]`
    pub trees: Vec<Vec<RegTree>>,
    pub n_classes: usize,
}

/// Cut points per feature: value `v` falls in the first bin `b` with
/// `v <= cuts[b]`, or in bin `cuts.len()`.
pub(crate) fn bin_cuts(col: ArrayView1<f64>, max_bins: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = col.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    if vals.len() <= 1 {
        return Vec::new();
    }
    let mids = |a: f64, b: f64| {
        let m = a + (b - a) / 2.0;
        if m >= b {
            a
        } else {
            m
        }
    };
    if vals.len() <= max_bins {
        return vals.windows(2).map(|w| mids(w[0], w[1])).collect();
    }
    // quantiles over the distinct values of the sorted column
    let mut all: Vec<f64> = col.to_vec();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let mut cuts: Vec<f64> = (1..max_bins)
        .filter_map(|q| {
            let i = q * n / max_bins;
            let (a, b) = (all[i - 1], all[i]);
            if a < b {
                Some(mids(a, b))
            } else {
                // place the cut after the run of equal values
                let j = all[i..].iter().position(|&v| v > a).map(|p| i + p)?;
                Some(mids(a, all[j]))
            }
        })
        .collect();
    cuts.dedup();
    cuts
}

pub(crate) fn bin_of(cuts: &[f64], v: f64) -> u8 {
    cuts.partition_point(|&c| c < v) as u8
}

struct Grower<'a> {
    bins: &'a [Vec<u8>], // [feature][row]
    cuts: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<RegNode>,
}

impl Grower<'_> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        let value = -self.params.learning_rate * g / (h + self.params.lambda);
        self.nodes.push(RegNode::Leaf { value });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || rows.len() < 2 * min_leaf {
            return self.leaf(g, h);
        }
        let lambda = self.params.lambda;
        let parent = g * g / (h + lambda);
        let mut best: Option<(f64, usize, usize)> = None; // gain, feature, bin
        for (f, col) in self.bins.iter().enumerate() {
            let n_bins = self.cuts[f].len() + 1;
            if n_bins < 2 {
                continue;
            }
            let mut hg = vec![0.0; n_bins];
            let mut hh = vec![0.0; n_bins];
            let mut hc = vec![0usize; n_bins];
            for &r in &rows {
                let b = col[r] as usize;
                hg[b] += self.grad[r];
                hh[b] += self.hess[r];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..n_bins - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                let cr = rows.len() - cl;
                if cl < min_leaf || cr < min_leaf {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return self.leaf(g, h);
        };
        let col = &self.bins[feature];
        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| col[r] as usize <= bin);
        let idx = self.nodes.len();
        self.nodes.push(RegNode::Leaf { value: 0.0 });
        let left = self.grow(lrows, depth + 1);
        let right = self.grow(rrows, depth + 1);
        self.nodes[idx] = RegNode::Split {
            feature,
            threshold: self.cuts[feature][bin],
            left,
            right,
        };
        idx
    }
}

impl Gbdt {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &GbdtParams) -> Gbdt {
        let (n, d) = x.dim();
        let max_bins = params.max_bins.clamp(2, 256);
        let cuts: Vec<Vec<f64>> = (0..d).map(|j| bin_cuts(x.column(j), max_bins)).collect();
        let bins: Vec<Vec<u8>> = (0..d)
            .map(|j| x.column(j).iter().map(|&v| bin_of(&cuts[j], v)).collect())
            .collect();

        let mut counts = vec![0.0; n_classes];
        for &c in y {
            counts[c] += 1.0;
        }
        let init: Vec<f64> = counts
            .iter()
            .map(|&c| ((c + 1.0) / (n as f64 + n_classes as f64)).ln())
            .collect();
        let mut scores = Array2::from_shape_fn((n, n_classes), |(_, c)| init[c]);
        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let all_rows: Vec<usize> = (0..n).collect();
        for _ in 0..params.n_rounds {
            let mut probs = scores.clone();
            super::softmax_rows(&mut probs);
            let mut round = Vec::with_capacity(n_classes);
            for c in 0..n_classes {
                for i in 0..n {
                    let p = probs[[i, c]];
                    grad[i] = p - if y[i] == c { 1.0 } else { 0.0 };
                    hess[i] = (p * (1.0 - p)).max(1e-16);
                }
                let mut grower = Grower {
                    bins: &bins,
                    cuts: &cuts,
                    grad: &grad,
                    hess: &hess,
                    params,
                    nodes: Vec::new(),
                };
                grower.grow(all_rows.clone(), 0);
                let tree = RegTree {
                    nodes: grower.nodes,
                };
                for i in 0..n {
                    scores[[i, c]] += tree.predict(x.row(i));
                }
                round.push(tree);
            }
            trees.push(round);
        }
        Gbdt {
            init,
            trees,
            n_classes,
        }
    }

    pub fn raw_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::from_shape_fn((x.nrows(), self.n_classes), |(_, c)| self.init[c]);
        for (i, row) in x.outer_iter().enumerate() {
            for round in &self.trees {
                for (c, t) in round.iter().enumerate() {
                    out[[i, c]] += t.predict(row);
                }
            }
        }
        out
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut s = self.raw_scores(x);
        super::softmax_rows(&mut s);
        s
    }
}
