//! Gradient-based attributions for differentiable (ReLU MLP) models. All
//! of them explain the pre-softmax logit of one class.

use ndarray::{Array1, ArrayView1};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Mlp, ReluBackward};
use crate::seed;

/// A model that exposes class logits and a backward pass to its inputs.
pub trait Differentiable: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn logit(&self, x: ArrayView1<f64>, class: usize) -> f64;
    fn backward(&self, x: ArrayView1<f64>, class: usize, rule: ReluBackward) -> Array1<f64>;
}

impl Differentiable for Mlp {
    fn n_inputs(&self) -> usize {
        Mlp::n_inputs(self)
    }
    fn n_outputs(&self) -> usize {
        Mlp::n_outputs(self)
    }
    fn logit(&self, x: ArrayView1<f64>, class: usize) -> f64 {
        self.logits(x.insert_axis(ndarray::Axis(0)))[[0, class]]
    }
    fn backward(&self, x: ArrayView1<f64>, class: usize, rule: ReluBackward) -> Array1<f64> {
        Mlp::backward(self, x, class, rule)
    }
}

fn check<M: Differentiable + ?Sized>(m: &M, x: ArrayView1<f64>, class: usize) -> Result<()> {
    if x.len() != m.n_inputs() {
        return Err(Error::shape(format!("{} features", m.n_inputs()), x.len().to_string()));
    }
    if class >= m.n_outputs() {
        return Err(Error::InvalidArgument(format!("class {class} out of range")));
    }
    Ok(())
}

fn gradient<M: Differentiable + ?Sized>(m: &M, x: ArrayView1<f64>, class: usize) -> Array1<f64> {
    m.backward(x, class, ReluBackward::Gradient)
}

pub fn saliency<M: Differentiable + ?Sized>(m: &M, x: ArrayView1<f64>, class: usize) -> Result<Array1<f64>> {
    check(m, x, class)?;
    Ok(gradient(m, x, class).mapv(f64::abs))
}

pub fn gradient_input<M: Differentiable + ?Sized>(m: &M, x: ArrayView1<f64>, class: usize) -> Result<Array1<f64>> {
    check(m, x, class)?;
    Ok(gradient(m, x, class) * x)
}

/// Path integral of the gradient from `baseline` to `x` by the midpoint
/// rule, scaled by `x - baseline`.
pub fn integrated_gradients<M: Differentiable + ?Sized>(
    m: &M,
    x: ArrayView1<f64>,
    baseline: ArrayView1<f64>,
    steps: usize,
    class: usize,
) -> Result<Array1<f64>> {
    check(m, x, class)?;
    if baseline.len() != x.len() {
        return Err(Error::shape(format!("baseline of {}", x.len()), baseline.len().to_string()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("integrated gradients needs steps >= 1".into()));
    }
    let diff = &x - &baseline;
    let mut total = Array1::zeros(x.len());
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = &baseline + &(&diff * alpha);
        total += &gradient(m, point.view(), class);
    }
    Ok(total / steps as f64 * diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Mean gradient.
    Smooth,
    /// Mean squared gradient.
    Square,
    /// Variance of the gradient.
    Var,
}

/// Gradient statistics over `n` Gaussian perturbations of `x`.
pub fn noise_ensemble<M: Differentiable + ?Sized>(
    m: &M,
    x: ArrayView1<f64>,
    class: usize,
    mode: NoiseMode,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    check(m, x, class)?;
    if n == 0 || sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument("noise ensemble needs n >= 1 and sigma >= 0".into()));
    }
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let grads: Vec<Array1<f64>> = (0..n)
        .map(|_| {
            let noisy = x.mapv(|v| v + sigma * normal.sample(&mut rng));
            gradient(m, noisy.view(), class)
        })
        .collect();
    let mean = grads.iter().fold(Array1::zeros(x.len()), |a, g| a + g) / n as f64;
    Ok(match mode {
        NoiseMode::Smooth => mean,
        NoiseMode::Square => grads.iter().fold(Array1::zeros(x.len()), |a, g| a + g * g) / n as f64,
        NoiseMode::Var => {
            grads.iter().fold(Array1::zeros(x.len()), |a, g| {
                let d = g - &mean;
                a + &d * &d
            }) / n as f64
        }
    })
}

/// Backward pass where every ReLU forwards only positive upstream signal.
pub fn deconvnet<M: Differentiable + ?Sized>(m: &M, x: ArrayView1<f64>, class: usize) -> Result<Array1<f64>> {
    check(m, x, class)?;
    Ok(m.backward(x, class, ReluBackward::Deconv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn linear(w: [f64; 2]) -> Mlp {
        Mlp::from_layers(vec![(array![[w[0], w[1]]], array![0.5])])
    }

    fn two_layer() -> Mlp {
        Mlp::from_layers(vec![
            (array![[1.0, -2.0, 0.5], [-0.7, 0.3, 1.2], [0.4, 0.9, -1.1], [1.5, 0.2, 0.3]], array![0.1, -0.2, 0.05, -0.3]),
            (array![[0.8, -1.0, 0.6, 0.9], [-0.5, 1.1, 0.7, -0.4]], array![0.0, 0.1]),
        ])
    }

    #[test]
    fn saliency_examples() {
        let m = linear([2.0, -3.0]);
        assert_eq!(saliency(&m, array![0.4, 0.1].view(), 0).unwrap(), array![2.0, 3.0]);
        // unit 0 only sees x0 and is dead for x0 < 0
        let dead = Mlp::from_layers(vec![
            (array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]),
            (array![[1.0, 1.0]], array![0.0]),
        ]);
        assert_eq!(saliency(&dead, array![-1.0, 2.0].view(), 0).unwrap(), array![0.0, 1.0]);
        let net = two_layer();
        let x = array![0.3, 0.6, 0.2];
        assert_eq!(saliency(&net, x.view(), 1).unwrap(), net.input_gradient(x.view(), 1).mapv(f64::abs));
    }

    #[test]
    fn gradient_input_examples() {
        let m = linear([2.0, 3.0]);
        assert_eq!(gradient_input(&m, array![1.0, 1.0].view(), 0).unwrap(), array![2.0, 3.0]);
        assert_eq!(gradient_input(&m, array![0.0, 0.0].view(), 0).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn integrated_gradients_examples() {
        let m = linear([2.0, -3.0]);
        let ig = integrated_gradients(&m, array![1.0, 2.0].view(), array![0.5, 0.0].view(), 3, 0).unwrap();
        assert_abs_diff_eq!(ig[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ig[1], -6.0, epsilon = 1e-12);
        let x = array![0.3, 0.6, 0.2];
        let zero = integrated_gradients(&two_layer(), x.view(), x.view(), 16, 0).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        assert!(integrated_gradients(&m, array![1.0, 2.0].view(), array![0.0].view(), 4, 0).is_err());
    }

    #[test]
    fn integrated_gradients_completeness() {
        let net = two_layer();
        let x = array![0.9, -0.4, 0.7];
        let base = Array1::zeros(3);
        for class in 0..2 {
            let ig = integrated_gradients(&net, x.view(), base.view(), 128, class).unwrap();
            let gap = net.logit(x.view(), class) - net.logit(base.view(), class);
            assert!((ig.sum() - gap).abs() <= 0.01 * gap.abs().max(1e-9), "{} vs {}", ig.sum(), gap);
        }
    }

    #[test]
    fn noise_ensemble_examples() {
        let net = two_layer();
        let x = array![0.3, 0.6, 0.2];
        let smooth = noise_ensemble(&net, x.view(), 0, NoiseMode::Smooth, 5, 0.0, 1).unwrap();
        assert_eq!(smooth, net.input_gradient(x.view(), 0));
        let var = noise_ensemble(&net, x.view(), 0, NoiseMode::Var, 5, 0.0, 1).unwrap();
        assert!(var.iter().all(|v| *v == 0.0));
        let square = noise_ensemble(&net, x.view(), 0, NoiseMode::Square, 5, 0.0, 1).unwrap();
        for (s, m) in square.iter().zip(smooth.iter()) {
            assert_abs_diff_eq!(*s, m * m, epsilon = 1e-12);
        }
        let lin = linear([2.0, -3.0]);
        let s = noise_ensemble(&lin, array![0.1, 0.2].view(), 0, NoiseMode::Smooth, 20, 1.0, 4).unwrap();
        assert_eq!(s, array![2.0, -3.0]);
        let v = noise_ensemble(&lin, array![0.1, 0.2].view(), 0, NoiseMode::Var, 20, 1.0, 4).unwrap();
        assert!(v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noise_ensemble_is_seeded() {
        let net = two_layer();
        let x = array![0.3, 0.6, 0.2];
        let a = noise_ensemble(&net, x.view(), 1, NoiseMode::Var, 16, 0.5, 9).unwrap();
        let b = noise_ensemble(&net, x.view(), 1, NoiseMode::Var, 16, 0.5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deconvnet_examples() {
        // all weights positive and inputs positive: active units, positive signal
        let pos = Mlp::from_layers(vec![
            (array![[1.0, 0.5], [0.2, 2.0]], array![0.0, 0.0]),
            (array![[0.7, 1.3]], array![0.0]),
        ]);
        let x = array![1.0, 2.0];
        assert_eq!(deconvnet(&pos, x.view(), 0).unwrap(), pos.input_gradient(x.view(), 0));
        // negative upstream signal into a single ReLU is dropped
        let neg = Mlp::from_layers(vec![(array![[1.0]], array![0.0]), (array![[-2.0]], array![0.0])]);
        assert_eq!(deconvnet(&neg, array![1.0].view(), 0).unwrap(), array![0.0]);
        let lin = Mlp::from_layers(vec![(Array2::from_shape_vec((1, 2), vec![-1.0, 4.0]).unwrap(), array![0.0])]);
        assert_eq!(deconvnet(&lin, x.view(), 0).unwrap(), lin.input_gradient(x.view(), 0));
    }
}
