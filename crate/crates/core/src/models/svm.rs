//! One-vs-rest linear SVM trained with averaged stochastic subgradient
//! descent on the regularized hinge loss.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Inverse regularization strength; the per-sample penalty is `1 / (C n)`.
    pub c: f64,
    pub epochs: usize,
    /// Initial step size.
    pub eta0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 0.5,
            epochs: 15,
            eta0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// `[class][feature]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearSvm {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        params: &SvmParams,
        seed: u64,
    ) -> LinearSvm {
        let (n, d) = x.dim();
        let lambda = 1.0 / (params.c * n as f64);
        let t0 = 1.0 / (lambda * params.eta0);
        let mut weights = Array2::zeros((n_classes, d));
        let mut bias = Array1::zeros(n_classes);
        for c in 0..n_classes {
            let mut rng = seed::rng(seed::derive(seed, c as u64));
            let mut w = vec![0.0; d];
            let mut b = 0.0;
            // Polyak average over all steps after the first epoch
            let mut w_avg = vec![0.0; d];
            let mut b_avg = 0.0;
            let mut n_avg = 0.0;
            let mut order: Vec<usize> = (0..n).collect();
            let mut t = 0.0;
            for epoch in 0..params.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let eta = 1.0 / (lambda * (t + t0));
                    t += 1.0;
                    let target = if y[i] == c { 1.0 } else { -1.0 };
                    let row = x.row(i);
                    let margin = target * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
                    let shrink = 1.0 - eta * lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (wj, xj) in w.iter_mut().zip(row.iter()) {
                            *wj += eta * target * xj;
                        }
                        b += eta * target;
                    }
                    if epoch > 0 || params.epochs == 1 {
                        n_avg += 1.0;
                        let r = 1.0 / n_avg;
                        for (a, v) in w_avg.iter_mut().zip(&w) {
                            *a += (v - *a) * r;
                        }
                        b_avg += (b - b_avg) * r;
                    }
                }
            }
            weights.row_mut(c).assign(&Array1::from(w_avg));
            bias[c] = b_avg;
        }
        LinearSvm { weights, bias }
    }

    pub fn decision(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    /// Softmax over the one-vs-rest scores.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut s = self.decision(x);
        super::softmax_rows(&mut s);
        s
    }
}
