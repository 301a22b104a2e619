//! Perturbation attributions on model outputs: occlusion and a tabular
//! LIME surrogate.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::OutputFn;
use crate::error::{Error, Result};
use crate::seed;

/// `out[c][j] = f_c(x) - f_c(x with feature j set to baseline_value)`.
pub fn occlusion(f: &dyn OutputFn, x: ArrayView1<f64>, baseline_value: f64) -> Result<Array2<f64>> {
    let d = x.len();
    if d != f.n_inputs() {
        return Err(Error::shape(format!("{} features", f.n_inputs()), d.to_string()));
    }
    let mut batch = Array2::zeros((d + 1, d));
    for mut row in batch.outer_iter_mut() {
        row.assign(&x);
    }
    for j in 0..d {
        batch[[j + 1, j]] = baseline_value;
    }
    let y = f.eval(batch.view())?;
    Ok(Array2::from_shape_fn((y.ncols(), d), |(c, j)| y[[0, c]] - y[[j + 1, c]]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturb: usize,
    /// Standard deviation of the Gaussian perturbations.
    pub sigma: f64,
    /// Kernel width in units of `sigma`; `None` means `0.75 * sqrt(n_features)`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_perturb: 1000,
            sigma: 0.1,
            kernel_width: None,
            ridge: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    /// `[class][feature]`
    pub coefficients: Array2<f64>,
    pub intercept: Vec<f64>,
    /// Ridge actually used (raised when the system was singular).
    pub ridge: f64,
    pub flags: Vec<String>,
}

/// Weighted ridge surrogate `f_c(z) ~ a_c + b_c . (z - x)` over Gaussian
/// perturbations `z` of `x`, weights `exp(-d^2 / kw^2)` with `d` the
/// perturbation norm in units of `sigma`. The intercept is not penalized.
pub fn lime_tabular(f: &dyn OutputFn, x: ArrayView1<f64>, cfg: &LimeConfig, seed: u64) -> Result<LimeFit> {
    let d = x.len();
    if d != f.n_inputs() {
        return Err(Error::shape(format!("{} features", f.n_inputs()), d.to_string()));
    }
    if cfg.n_perturb <= d {
        return Err(Error::InvalidArgument(format!(
            "LIME needs more than {d} perturbations, got {}",
            cfg.n_perturb
        )));
    }
    if cfg.sigma.is_nan() || cfg.sigma <= 0.0 {
        return Err(Error::InvalidArgument("LIME sigma must be positive".into()));
    }
    let kw = cfg.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // first row is the unperturbed sample
    let eps = Array2::from_shape_fn((cfg.n_perturb, d), |(i, _)| {
        if i == 0 { 0.0 } else { normal.sample(&mut rng) }
    });
    let z = &eps * cfg.sigma + x;
    let y = f.eval(z.view())?;
    let k = y.ncols();

    let p = d + 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, k);
    let mut design = vec![0.0; p];
    for i in 0..cfg.n_perturb {
        let dist2: f64 = eps.row(i).iter().map(|e| e * e).sum();
        let w = (-dist2 / (kw * kw)).exp();
        design[0] = 1.0;
        for j in 0..d {
            design[j + 1] = eps[[i, j]] * cfg.sigma;
        }
        for r in 0..p {
            let wr = w * design[r];
            for c in 0..p {
                a[(r, c)] += wr * design[c];
            }
            for c in 0..k {
                rhs[(r, c)] += wr * y[[i, c]];
            }
        }
    }
    let mut ridge = cfg.ridge;
    let mut flags = Vec::new();
    let sol = loop {
        let mut reg = a.clone();
        for j in 1..p {
            reg[(j, j)] += ridge;
        }
        if let Some(ch) = reg.cholesky() {
            break ch.solve(&rhs);
        }
        if ridge > 1e6 {
            return Err(Error::Numerical("LIME surrogate system is singular".into()));
        }
        ridge = if ridge > 0.0 { ridge * 10.0 } else { 1e-6 };
        flags.push(format!("LIME ridge raised to {ridge}"));
    };
    Ok(LimeFit {
        coefficients: Array2::from_shape_fn((k, d), |(c, j)| sol[(j + 1, c)]),
        intercept: (0..k).map(|c| sol[(0, c)]).collect(),
        ridge,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::FnOutput;
    use ndarray::{array, Axis};

    fn linear3() -> FnOutput<impl Fn(ndarray::ArrayView2<f64>) -> Array2<f64> + Sync> {
        FnOutput::new(3, 1, |x| {
            x.map_axis(Axis(1), |r| 0.2 + 1.5 * r[0] - 0.8 * r[1]).insert_axis(Axis(1))
        })
    }

    #[test]
    fn occlusion_examples() {
        let f = linear3();
        let x = array![0.4, 0.9, 0.3];
        let o = occlusion(&f, x.view(), 0.1).unwrap();
        assert!((o[[0, 0]] - 1.5 * 0.3).abs() < 1e-12);
        assert!((o[[0, 1]] + 0.8 * 0.8).abs() < 1e-12);
        assert_eq!(o[[0, 2]], 0.0);
        let same = occlusion(&f, array![0.1, 0.1, 0.1].view(), 0.1).unwrap();
        assert!(same.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lime_recovers_linear_weights() {
        let f = linear3();
        let fit = lime_tabular(&f, array![0.4, 0.9, 0.3].view(), &LimeConfig::default(), 5).unwrap();
        let c = fit.coefficients.row(0);
        assert!((c[0] - 1.5).abs() <= 0.05 * 1.5, "{c}");
        assert!((c[1] + 0.8).abs() <= 0.05 * 0.8, "{c}");
        assert!(c[2].abs() < 0.02, "{c}");
    }

    #[test]
    fn lime_is_seeded_and_checks_budget() {
        let f = linear3();
        let x = array![0.4, 0.9, 0.3];
        let cfg = LimeConfig { n_perturb: 50, ..LimeConfig::default() };
        assert_eq!(lime_tabular(&f, x.view(), &cfg, 1).unwrap(), lime_tabular(&f, x.view(), &cfg, 1).unwrap());
        let small = LimeConfig { n_perturb: 3, ..LimeConfig::default() };
        assert!(lime_tabular(&f, x.view(), &small, 1).is_err());
    }
}
