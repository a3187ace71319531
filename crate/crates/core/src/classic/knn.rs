use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Brute-force Euclidean k-nearest neighbours with uniform votes. Distance
/// ties keep the earlier training row; vote ties go to the lowest class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, k: usize) -> Self {
        Self {
            k,
            n_classes,
            x: x.clone(),
            y: y.to_vec(),
        }
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.x.rows());
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| {
                let d: f64 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let mut votes = vec![0usize; self.n_classes];
                for j in self.neighbours(x.row(i)) {
                    votes[self.y[j]] += 1;
                }
                let mut best = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}
