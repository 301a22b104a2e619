//! CART classification trees (Gini impurity) with sample weights.
//! Shared by the single-tree model, the random forest and AdaBoost.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::Count(k) => k,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Normalized class distribution of the training weight reaching the leaf.
    Leaf { dist: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    /// Weighted Gini decrease attributed to each feature, unnormalized.
    pub impurity_decrease: Vec<f64>,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: &'a TreeParams,
    mtry: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    total_weight: f64,
    buf: Vec<(f64, usize)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn class_weights(&self, rows: &[usize]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += self.w[r];
        }
        let total = counts.iter().sum();
        (counts, total)
    }

    fn leaf(&mut self, counts: &[f64], total: f64) -> usize {
        let dist = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / self.n_classes as f64; self.n_classes]
        };
        self.nodes.push(Node::Leaf { dist });
        self.nodes.len() - 1
    }

    fn find_split(&mut self, rows: &[usize], counts: &[f64], total: f64) -> Option<BestSplit> {
        let n_features = self.x.ncols();
        let features: Vec<usize> = if self.mtry >= n_features {
            (0..n_features).collect()
        } else {
            sample(&mut self.rng, n_features, self.mtry).into_vec()
        };
        let min_leaf = self.params.min_samples_leaf.max(1);
        // maximize sum_c l_c^2 / L + sum_c r_c^2 / R (equivalent to min weighted Gini)
        let parent_score = counts.iter().map(|c| c * c).sum::<f64>() / total;
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0.0; self.n_classes];
        for f in features {
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&r| (self.x[[r, f]], r)));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.buf[0].0 == self.buf[self.buf.len() - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|v| *v = 0.0);
            let mut right = counts.to_vec();
            let (mut sq_left, mut sq_right) = (0.0, counts.iter().map(|c| c * c).sum::<f64>());
            let (mut w_left, mut w_right) = (0.0, total);
            let n = self.buf.len();
            for i in 0..n - 1 {
                let (v, r) = self.buf[i];
                let (c, wt) = (self.y[r], self.w[r]);
                sq_left += 2.0 * left[c] * wt + wt * wt;
                sq_right += -2.0 * right[c] * wt + wt * wt;
                left[c] += wt;
                right[c] -= wt;
                w_left += wt;
                w_right -= wt;
                let next = self.buf[i + 1].0;
                if next == v || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                if w_left <= 0.0 || w_right <= 0.0 {
                    continue;
                }
                let score = sq_left / w_left + sq_right / w_right;
                if score > parent_score + 1e-12 * parent_score.abs()
                    && best.as_ref().is_none_or(|b| score > b.score)
                {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (counts, total) = self.class_weights(&rows);
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || rows.len() < self.params.min_samples_split.max(2) || total <= 0.0 {
            return self.leaf(&counts, total);
        }
        let Some(split) = self.find_split(&rows, &counts, total) else {
            return self.leaf(&counts, total);
        };
        let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x[[r, split.feature]] <= split.threshold);
        let (lc, lt) = self.class_weights(&lrows);
        let (rc, rt) = self.class_weights(&rrows);
        self.importance[split.feature] += (total * gini(&counts, total)
            - lt * gini(&lc, lt)
            - rt * gini(&rc, rt))
            / self.total_weight;

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: Vec::new() });
        let left = self.grow(lrows, depth + 1);
        let right = self.grow(rrows, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        idx
    }
}

impl DecisionTree {
    /// Fit on the rows with positive weight. `weights` has one entry per row of `x`.
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        params: &TreeParams,
        seed: u64,
    ) -> DecisionTree {
        let rows: Vec<usize> = (0..x.nrows()).filter(|&r| weights[r] > 0.0).collect();
        let total_weight: f64 = rows.iter().map(|&r| weights[r]).sum();
        let mut b = Builder {
            x,
            y,
            w: weights,
            n_classes,
            params,
            mtry: params.max_features.resolve(x.ncols()),
            rng: seed::rng(seed),
            nodes: Vec::new(),
            importance: vec![0.0; x.ncols()],
            total_weight: total_weight.max(f64::MIN_POSITIVE),
            buf: Vec::with_capacity(rows.len()),
        };
        b.grow(rows, 0);
        DecisionTree {
            nodes: b.nodes,
            n_classes,
            impurity_decrease: b.importance,
        }
    }

    pub fn leaf_dist(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Majority class of the leaf (lowest index on ties).
    pub fn predict_class(&self, row: ArrayView1<f64>) -> usize {
        crate::models::argmax(self.leaf_dist(row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_single_feature() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0, 0, 1, 1];
        let t = DecisionTree::fit(x.view(), &y, &[1.0; 4], 2, &TreeParams::default(), 0);
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict_class(array![0.5].view()), 0);
        assert_eq!(t.predict_class(array![2.5].view()), 1);
    }

    #[test]
    fn depth_limit_and_weights() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0, 1, 0, 1];
        let p = TreeParams { max_depth: Some(0), ..TreeParams::default() };
        let t = DecisionTree::fit(x.view(), &y, &[3.0, 1.0, 0.0, 0.0], 2, &p, 0);
        assert_eq!(t.leaf_dist(array![9.0].view()), &[0.75, 0.25]);
    }

    #[test]
    fn picks_informative_feature() {
        let x = array![[5.0, 0.0], [5.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 0, 1];
        let t = DecisionTree::fit(x.view(), &y, &[1.0; 4], 2, &TreeParams::default(), 0);
        assert!(t.impurity_decrease[1] > 0.0);
        assert_eq!(t.impurity_decrease[0], 0.0);
    }
}
