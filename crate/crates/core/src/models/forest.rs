use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, MaxFeatures, TreeParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: Some(10),
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl RandomForest {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> RandomForest {
        let n = x.nrows();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            min_samples_leaf: 1,
            max_features: params.max_features,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = seed::derive(seed, t as u64);
                let weights = if params.bootstrap {
                    // bootstrap multiplicities as weights
                    let mut rng = seed::rng(seed::derive(tree_seed, 1));
                    let mut w = vec![0.0; n];
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1.0;
                    }
                    w
                } else {
                    vec![1.0; n]
                };
                DecisionTree::fit(x, y, &weights, n_classes, &tree_params, tree_seed)
            })
            .collect();
        RandomForest { trees, n_classes }
    }

    /// Per-tree leaf distributions for one row, `[tree][class]`.
    pub fn tree_probas(&self, row: ArrayView1<f64>) -> Vec<Vec<f64>> {
        self.trees.iter().map(|t| t.leaf_dist(row).to_vec()).collect()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        let scale = 1.0 / self.trees.len() as f64;
        for (i, row) in x.outer_iter().enumerate() {
            for t in &self.trees {
                for (c, p) in t.leaf_dist(row).iter().enumerate() {
                    out[[i, c]] += p;
                }
            }
            out.row_mut(i).mapv_inplace(|v| v * scale);
        }
        out
    }

    /// Mean decrease in impurity, each tree normalized to sum 1, then
    /// averaged and renormalized.
    pub fn feature_importances(&self, n_features: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_features];
        for t in &self.trees {
            let s: f64 = t.impurity_decrease.iter().sum();
            if s > 0.0 {
                for (a, v) in acc.iter_mut().zip(&t.impurity_decrease) {
                    *a += v / s;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        }
        acc
    }
}
