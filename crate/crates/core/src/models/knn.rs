use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

/// Brute-force k-nearest neighbours, Euclidean distance, uniform votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Knn {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &KnnParams) -> Knn {
        Knn {
            k: params.k.clamp(1, x.nrows().max(1)),
            x: x.as_standard_layout().into_owned(),
            y: y.to_vec(),
            n_classes,
        }
    }

    /// Indices of the k nearest training rows, nearest first; equal
    /// distances keep the lower training index first.
    pub fn neighbors(&self, q: ArrayView1<f64>) -> Vec<usize> {
        let q: Vec<f64> = q.to_vec();
        let train = self.x.as_slice().expect("standard layout");
        let d = self.x.ncols();
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        let mut bound = f64::INFINITY;
        for (i, row) in train.chunks_exact(d.max(1)).enumerate() {
            let mut dist = 0.0;
            let mut pruned = false;
            for (chunk_a, chunk_b) in row.chunks(8).zip(q.chunks(8)) {
                for (a, b) in chunk_a.iter().zip(chunk_b) {
                    let t = a - b;
                    dist += t * t;
                }
                if dist >= bound {
                    pruned = true;
                    break;
                }
            }
            if pruned {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= dist);
            best.insert(pos, (dist, i));
            if best.len() > self.k {
                best.pop();
            }
            if best.len() == self.k {
                bound = best[self.k - 1].0;
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let mut p = vec![0.0; self.n_classes];
                let nb = self.neighbors(x.row(i));
                for j in &nb {
                    p[self.y[*j]] += 1.0;
                }
                let m = nb.len() as f64;
                p.iter_mut().for_each(|v| *v /= m);
                p
            })
            .collect();
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, p) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&ndarray::Array1::from(p));
        }
        out
    }
}
