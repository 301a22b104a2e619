//! Dense ReLU network with a softmax output, trained with Adam on
//! cross-entropy. Also provides the input-space backward passes used by the
//! gradient attribution methods.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Width {
    /// As many units as the network has inputs.
    Inputs,
    Units(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<Width>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Lower bound on Adam updates; extra epochs are added on small data.
    #[serde(default = "default_min_updates")]
    pub min_updates: usize,
    /// Independently seeded runs; the one with the lowest training loss is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_min_updates() -> usize {
    1000
}

fn default_restarts() -> usize {
    3
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![Width::Units(16)],
            dropout: 0.01,
            epochs: 11,
            batch_size: 1024,
            learning_rate: 0.01,
            min_updates: default_min_updates(),
            restarts: default_restarts(),
        }
    }
}

impl MlpParams {
    /// Deeper variant: an input-width ReLU layer in front of the 16-unit layer.
    pub fn dnn() -> Self {
        MlpParams {
            hidden: vec![Width::Inputs, Width::Units(16)],
            ..MlpParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[out][in]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Hidden layers (ReLU) followed by the linear logit layer.
    pub layers: Vec<Dense>,
}

/// How the backward pass treats a ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluBackward {
    /// True gradient: pass upstream signal where the unit was active.
    Gradient,
    /// DeconvNet rule: pass only positive upstream signal, whatever the
    /// forward activation was.
    Deconv,
}

struct Adam {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-7;

impl Mlp {
    pub fn from_layers(layers: Vec<(Array2<f64>, Array1<f64>)>) -> Mlp {
        Mlp {
            layers: layers.into_iter().map(|(w, b)| Dense { w, b }).collect(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    fn init(n_in: usize, n_out: usize, params: &MlpParams, rng: &mut seed::Rng) -> Mlp {
        let mut widths = vec![n_in];
        for h in &params.hidden {
            widths.push(match h {
                Width::Inputs => n_in,
                Width::Units(u) => *u,
            });
        }
        widths.push(n_out);
        let layers = widths
            .windows(2)
            .map(|p| {
                // Glorot uniform
                let limit = (6.0 / (p[0] + p[1]) as f64).sqrt();
                let w = Array2::from_shape_fn((p[1], p[0]), |_| rng.random_range(-limit..limit));
                Dense {
                    w,
                    b: Array1::zeros(p[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
        params: &MlpParams,
        seed: u64,
    ) -> Mlp {
        let runs: Vec<(f64, Mlp)> = (0..params.restarts.max(1) as u64)
            .into_par_iter()
            .map(|r| {
                let net = Mlp::fit_once(x, y, n_classes, params, seed::derive(seed, r));
                (net.cross_entropy(x, y), net)
            })
            .collect();
        runs.into_iter()
            .reduce(|best, run| if run.0 < best.0 { run } else { best })
            .expect("at least one run")
            .1
    }

    /// Mean cross-entropy of the labels under the network.
    pub fn cross_entropy(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let p = self.predict_proba(x);
        let total: f64 = y.iter().enumerate().map(|(i, &c)| -p[[i, c]].max(f64::MIN_POSITIVE).ln()).sum();
        total / y.len().max(1) as f64
    }

    fn fit_once(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &MlpParams, seed: u64) -> Mlp {
        let mut rng = seed::rng(seed);
        let mut net = Mlp::init(x.ncols(), n_classes, params, &mut rng);
        let mut adam = Adam {
            m: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
                .collect(),
            v: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
                .collect(),
            t: 0,
        };
        let n = x.nrows();
        let batch = params.batch_size.max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let per_epoch = n.div_ceil(batch).max(1);
        let epochs = params.epochs.max(params.min_updates.div_ceil(per_epoch));
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let xb = x.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let grads = net.batch_gradients(&xb, &yb, params.dropout, &mut rng);
                net.adam_step(&mut adam, &grads, params.learning_rate);
            }
        }
        net
    }

    fn batch_gradients(
        &self,
        xb: &Array2<f64>,
        yb: &[usize],
        dropout: f64,
        rng: &mut seed::Rng,
    ) -> Vec<(Array2<f64>, Array1<f64>)> {
        let n_layers = self.layers.len();
        let m = xb.nrows() as f64;
        // forward, keeping each layer's input
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut masks: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
        let mut h = xb.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w.t()) + &layer.b;
            inputs.push(h);
            if li + 1 < n_layers {
                let keep = 1.0 - dropout;
                let mask = Array2::from_shape_fn(z.raw_dim(), |idx| {
                    if z[idx] <= 0.0 || (dropout > 0.0 && rng.random::<f64>() < dropout) {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                h = &z * &mask;
                masks.push(mask);
            } else {
                h = z;
            }
        }
        // softmax cross-entropy gradient at the logits
        let mut delta = h;
        super::softmax_rows(&mut delta);
        for (i, &c) in yb.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta.mapv_inplace(|v| v / m);

        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); n_layers];
        for li in (0..n_layers).rev() {
            let gw = delta.t().dot(&inputs[li]);
            let gb = delta.sum_axis(Axis(0));
            if li > 0 {
                delta = delta.dot(&self.layers[li].w) * &masks[li - 1];
            }
            grads[li] = (gw, gb);
        }
        grads
    }

    fn adam_step(&mut self, adam: &mut Adam, grads: &[(Array2<f64>, Array1<f64>)], lr: f64) {
        adam.t += 1;
        let bc1 = 1.0 - BETA1.powi(adam.t);
        let bc2 = 1.0 - BETA2.powi(adam.t);
        let step = lr * bc2.sqrt() / bc1;
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[li];
            let (mw, mb) = &mut adam.m[li];
            let (vw, vb) = &mut adam.v[li];
            ndarray::Zip::from(&mut layer.w)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= step * *m / (v.sqrt() + EPS);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= step * *m / (v.sqrt() + EPS);
                });
        }
    }

    /// Pre-softmax outputs, `[row][class]`.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n_layers = self.layers.len();
        let mut h = x.to_owned();
        for (li, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.w.t()) + &layer.b;
            if li + 1 < n_layers {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut p = self.logits(x);
        super::softmax_rows(&mut p);
        p
    }

    /// Backward pass from the logit of `class` to the inputs.
    pub fn backward(&self, x: ArrayView1<f64>, class: usize, rule: ReluBackward) -> Array1<f64> {
        let n_layers = self.layers.len();
        let mut pre: Vec<Array1<f64>> = Vec::with_capacity(n_layers);
        let mut h = x.to_owned();
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.w.dot(&h) + &layer.b;
            if li + 1 < n_layers {
                h = z.mapv(|v| v.max(0.0));
                pre.push(z);
            }
        }
        let last = &self.layers[n_layers - 1];
        let mut g = last.w.slice(s![class, ..]).to_owned();
        for li in (0..n_layers - 1).rev() {
            match rule {
                ReluBackward::Gradient => {
                    ndarray::Zip::from(&mut g)
                        .and(&pre[li])
                        .for_each(|gv, &z| {
                            if z <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                }
                ReluBackward::Deconv => g.mapv_inplace(|v| v.max(0.0)),
            }
            g = self.layers[li].w.t().dot(&g);
        }
        g
    }

    pub fn input_gradient(&self, x: ArrayView1<f64>, class: usize) -> Array1<f64> {
        self.backward(x, class, ReluBackward::Gradient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_network_gradient_is_weight_row() {
        let net = Mlp::from_layers(vec![(array![[2.0, 3.0], [-1.0, 0.5]], array![0.0, 1.0])]);
        assert_eq!(net.input_gradient(array![0.3, -4.0].view(), 0), array![2.0, 3.0]);
        assert_eq!(net.input_gradient(array![0.3, -4.0].view(), 1), array![-1.0, 0.5]);
    }

    #[test]
    fn inactive_relu_blocks_gradient() {
        // hidden unit 0 sees only x0 and is dead at x0 < 0
        let net = Mlp::from_layers(vec![
            (array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]),
            (array![[1.0, 1.0]], array![0.0]),
        ]);
        let g = net.input_gradient(array![-1.0, 2.0].view(), 0);
        assert_eq!(g, array![0.0, 1.0]);
    }

    #[test]
    fn deconv_rule_ignores_forward_mask() {
        let net = Mlp::from_layers(vec![
            (array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]),
            (array![[1.0, -1.0]], array![0.0]),
        ]);
        // unit 0 dead, unit 1 alive; upstream signals (+1, -1)
        let x = array![-1.0, 2.0];
        assert_eq!(net.backward(x.view(), 0, ReluBackward::Deconv), array![1.0, 0.0]);
        assert_eq!(net.input_gradient(x.view(), 0), array![0.0, -1.0]);
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let x = Array2::from_shape_fn((400, 2), |(i, j)| {
            let c = (i % 2) as f64;
            if j == 0 { c * 2.0 - 1.0 + 0.1 * ((i * 7 % 11) as f64 / 11.0) } else { (i * 13 % 17) as f64 / 17.0 }
        });
        let y: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let params = MlpParams { epochs: 60, batch_size: 32, learning_rate: 0.01, ..MlpParams::default() };
        let net = Mlp::fit(x.view(), &y, 2, &params, 3);
        let p = net.predict_proba(x.view());
        let acc = (0..400).filter(|&i| (p[[i, 1]] > 0.5) as usize == y[i]).count();
        assert!(acc >= 390, "accuracy {acc}/400");
    }
}
