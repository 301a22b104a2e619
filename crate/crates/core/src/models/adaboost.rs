//! Multiclass AdaBoost (SAMME) over depth-1 trees.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub base_depth: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        AdaBoostParams {
            n_stages: 50,
            learning_rate: 1.0,
            base_depth: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub stages: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    pub n_classes: usize,
}

impl AdaBoost {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        params: &AdaBoostParams,
        seed: u64,
    ) -> AdaBoost {
        let n = x.nrows();
        let k = n_classes as f64;
        let base = TreeParams {
            max_depth: Some(params.base_depth),
            ..TreeParams::default()
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut stages = Vec::new();
        let mut alphas = Vec::new();
        for s in 0..params.n_stages {
            let tree = DecisionTree::fit(x, y, &w, n_classes, &base, seed::derive(seed, s as u64));
            let wrong: Vec<bool> = x
                .outer_iter()
                .zip(y)
                .map(|(row, &c)| tree.predict_class(row) != c)
                .collect();
            let total: f64 = w.iter().sum();
            let err: f64 = w
                .iter()
                .zip(&wrong)
                .filter(|(_, &bad)| bad)
                .map(|(v, _)| v)
                .sum::<f64>()
                / total;
            if err <= 0.0 {
                // perfect stage: it alone decides
                stages.push(tree);
                alphas.push(1.0);
                break;
            }
            if err >= 1.0 - 1.0 / k {
                if stages.is_empty() {
                    stages.push(tree);
                    alphas.push(1.0);
                }
                break;
            }
            let alpha = params.learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            for (wi, &bad) in w.iter_mut().zip(&wrong) {
                if bad {
                    *wi *= alpha.exp();
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            stages.push(tree);
            alphas.push(alpha);
        }
        AdaBoost {
            stages,
            alphas,
            n_classes,
        }
    }

    /// Normalized weighted votes, `[row][class]`, using the first `n_stages` stages.
    fn decision(&self, x: ArrayView2<f64>, n_stages: usize) -> Array2<f64> {
        let n_stages = n_stages.min(self.stages.len());
        let norm: f64 = self.alphas[..n_stages].iter().sum();
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.outer_iter().enumerate() {
            for (t, a) in self.stages[..n_stages].iter().zip(&self.alphas) {
                out[[i, t.predict_class(row)]] += a;
            }
        }
        if norm > 0.0 {
            out.mapv_inplace(|v| v / norm);
        }
        out
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut d = self.decision(x, self.stages.len());
        let scale = 1.0 / (self.n_classes as f64 - 1.0).max(1.0);
        d.mapv_inplace(|v| v * scale);
        super::softmax_rows(&mut d);
        d
    }

    /// Hard predictions of the ensemble truncated to its first `n_stages` stages.
    pub fn staged_predict(&self, x: ArrayView2<f64>, n_stages: usize) -> Vec<usize> {
        self.decision(x, n_stages)
            .outer_iter()
            .map(|r| super::argmax(r.as_slice().unwrap_or(&r.to_vec())))
            .collect()
    }
}
