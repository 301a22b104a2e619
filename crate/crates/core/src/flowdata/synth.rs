//! Planted-feature synthetic flows.
//!
//! Generative rule: each class `c` owns a sign code `s[c][j] ∈ {-1, +1}` on
//! the informative coordinates `j < n_informative`. A sample of class `c` has
//! `x_j = separation * s[c][j] + N(0, 1)` on informative coordinates and
//! `x_j = N(0, 1)` everywhere else, so the label depends only on the first
//! `n_informative` features. Codes are chosen so that every informative
//! coordinate differs between at least two classes, and among a fixed number
//! of seeded candidate code books the one with the largest minimum Hamming
//! distance is kept.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::seed;

const CODEBOOK_CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub n_classes: usize,
    pub separation: f64,
    /// Relative class frequencies; uniform when `None`.
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_samples: 2000,
            n_features: 30,
            n_informative: 5,
            n_classes: 4,
            separation: 1.5,
            class_weights: None,
            seed: 0,
        }
    }
}

pub fn synth_planted(
    n_samples: usize,
    n_features: usize,
    n_informative: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Dataset> {
    SynthSpec {
        n_samples,
        n_features,
        n_informative,
        n_classes,
        seed,
        ..SynthSpec::default()
    }
    .generate()
}

fn min_hamming(codes: &[Vec<i8>]) -> usize {
    let mut best = usize::MAX;
    for a in 0..codes.len() {
        for b in a + 1..codes.len() {
            let d = codes[a].iter().zip(&codes[b]).filter(|(x, y)| x != y).count();
            best = best.min(d);
        }
    }
    best
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_informative == 0 || self.n_informative > self.n_features {
            return bad(format!(
                "n_informative must be in 1..={}, got {}",
                self.n_features, self.n_informative
            ));
        }
        if self.n_informative < 64 && self.n_classes > (1usize << self.n_informative) {
            return bad(format!(
                "{} classes cannot have distinct codes on {} informative features",
                self.n_classes, self.n_informative
            ));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad(format!("separation must be finite and >= 0, got {}", self.separation));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.n_classes || w.iter().any(|&v| v.is_nan() || v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return bad("class_weights must be one non-negative weight per class".into());
            }
        }
        Ok(())
    }

    fn codebook(&self, rng: &mut seed::Rng) -> Vec<Vec<i8>> {
        let mut best: Option<(usize, Vec<Vec<i8>>)> = None;
        for _ in 0..CODEBOOK_CANDIDATES {
            let mut codes: Vec<Vec<i8>> = (0..self.n_classes)
                .map(|_| {
                    (0..self.n_informative)
                        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                        .collect()
                })
                .collect();
            // each informative coordinate must separate some pair of classes
            for j in 0..self.n_informative {
                if codes.iter().all(|c| c[j] == codes[0][j]) {
                    let flip = j % self.n_classes;
                    codes[flip][j] = -codes[flip][j];
                }
            }
            let score = min_hamming(&codes);
            if score > 0 && best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, codes));
            }
        }
        best.map(|(_, c)| c).unwrap_or_else(|| {
            // fall back to binary counting codes, always distinct
            (0..self.n_classes)
                .map(|c| {
                    (0..self.n_informative)
                        .map(|j| if (c >> (j % 63)) & 1 == 1 { 1 } else { -1 })
                        .collect()
                })
                .collect()
        })
    }

    /// The class sign codes this spec generates with, `[class][informative]`.
    pub fn class_codes(&self) -> Result<Vec<Vec<i8>>> {
        self.check()?;
        Ok(self.codebook(&mut seed::rng(seed::derive(self.seed, 0))))
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.check()?;
        let codes = self.codebook(&mut seed::rng(seed::derive(self.seed, 0)));
        let mut rng = seed::rng(seed::derive(self.seed, 1));

        let cumulative: Vec<f64> = {
            let w = self
                .class_weights
                .clone()
                .unwrap_or_else(|| vec![1.0; self.n_classes]);
            let total: f64 = w.iter().sum();
            w.iter()
                .scan(0.0, |acc, v| {
                    *acc += v / total;
                    Some(*acc)
                })
                .collect()
        };

        let mut x = Array2::zeros((self.n_samples, self.n_features));
        let mut y = Vec::with_capacity(self.n_samples);
        for i in 0..self.n_samples {
            let u: f64 = rng.random();
            let c = cumulative
                .iter()
                .position(|&p| u < p)
                .unwrap_or(self.n_classes - 1);
            y.push(c);
            for j in 0..self.n_features {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let mean = if j < self.n_informative {
                    self.separation * f64::from(codes[c][j])
                } else {
                    0.0
                };
                x[[i, j]] = mean + noise;
            }
        }

        let width = self.n_features.to_string().len().max(2);
        let features = (0..self.n_features)
            .map(|j| format!("f{j:0width$}"))
            .collect();
        let classes = std::iter::once("Normal".to_string())
            .chain((1..self.n_classes).map(|c| format!("Attack{c}")))
            .collect();
        Dataset::new(x, y, FeatureSchema::new(features, "label", classes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_names() {
        let d = synth_planted(200, 8, 3, 3, 1).unwrap();
        assert_eq!(d.n_samples(), 200);
        assert_eq!(d.n_features(), 8);
        assert_eq!(d.schema.class_names, vec!["Normal", "Attack1", "Attack2"]);
        assert_eq!(d.schema.feature_names[0], "f00");
    }

    #[test]
    fn invalid_counts() {
        assert!(synth_planted(10, 3, 4, 2, 0).is_err());
        assert!(synth_planted(10, 3, 2, 1, 0).is_err());
        assert!(synth_planted(10, 3, 1, 3, 0).is_err());
        assert!(synth_planted(10, 3, 0, 2, 0).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_planted(50, 4, 2, 2, 7).unwrap(), synth_planted(50, 4, 2, 2, 7).unwrap());
    }

    #[test]
    fn codes_separate_every_informative_coordinate() {
        for seed in 0..20 {
            let spec = SynthSpec { n_classes: 4, n_informative: 5, seed, ..SynthSpec::default() };
            let codes = spec.class_codes().unwrap();
            assert!(min_hamming(&codes) >= 1);
            for j in 0..5 {
                assert!(codes.iter().any(|c| c[j] != codes[0][j]));
            }
        }
    }

    #[test]
    fn noise_features_are_label_independent() {
        // class-conditional means of a noise column are all ~0
        let d = synth_planted(20_000, 6, 2, 3, 11).unwrap();
        for j in 2..6 {
            for c in 0..3 {
                let vals: Vec<f64> = (0..d.n_samples()).filter(|&i| d.y[i] == c).map(|i| d.x[[i, j]]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!(mean.abs() < 0.06, "feature {j} class {c} mean {mean}");
            }
        }
    }
}
