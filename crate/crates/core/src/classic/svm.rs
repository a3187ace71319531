use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::tree_rng;
use super::{argmax, Matrix, Standardizer};

/// One-vs-rest linear SVM: hinge loss + (λ/2)||w||², plain SGD on z-scored
/// features with the step size η_t = 1 / (λ (t0 + t − 1)). The bias is not
/// regularized. Class `c` shuffles with its own RNG stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub scaler: Standardizer,
    pub weights: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

fn train_binary(
    x: &Matrix,
    target: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
    class: usize,
) -> (Vec<f64>, f64) {
    let d = x.cols();
    let typw = (1.0 / lambda.sqrt()).sqrt();
    let t0 = 1.0 / (typw * lambda);
    let mut rng = tree_rng(seed, class as u64);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    // w = scale * v, so the shrink step is O(1).
    let mut v = vec![0.0; d];
    let mut scale = 1.0;
    let mut b = 0.0;
    let mut t = 1.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = 1.0 / (lambda * (t0 + t - 1.0));
            let row = x.row(i);
            let y = target[i];
            let margin = y * (scale * row.iter().zip(&v).map(|(a, w)| a * w).sum::<f64>() + b);
            scale *= 1.0 - eta * lambda;
            if margin < 1.0 {
                let step = eta * y / scale;
                v.iter_mut().zip(row).for_each(|(w, a)| *w += step * a);
                b += eta * y;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            t += 1.0;
        }
    }
    (v.into_iter().map(|w| w * scale).collect(), b)
}

impl LinearSvm {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        lambda: f64,
        epochs: usize,
        seed: u64,
    ) -> Self {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let (weights, intercept) = (0..n_classes)
            .map(|c| {
                let target: Vec<f64> = y.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect();
                train_binary(&xs, &target, lambda, epochs, seed, c)
            })
            .unzip();
        Self {
            scaler,
            weights,
            intercept,
        }
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; row.len()];
        self.scaler.transform_row(row, &mut z);
        self.weights
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| argmax(&self.decision(r))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_linearly_separable_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [(0.0, 4.0), (-4.0, -3.0), (4.0, -3.0)];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..150 {
            let (cx, cy) = centers[i % 3];
            rows.push(vec![
                cx + rng.random_range(-1.0..1.0),
                cy + rng.random_range(-1.0..1.0),
            ]);
            y.push(i % 3);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let svm = LinearSvm::fit(&x, &y, 3, 1e-4, 20, 0);
        assert_eq!(svm.predict(&x), y);
    }

    #[test]
    fn scaled_update_matches_naive_sgd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|r| if r[0] > r[1] { 1.0 } else { -1.0 })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let lambda = 0.01;
        let (w, b) = train_binary(&x, &target, lambda, 3, 9, 0);

        // Same schedule and order, with the dense update written out.
        let typw = (1.0 / lambda.sqrt()).sqrt();
        let t0 = 1.0 / (typw * lambda);
        let mut rng = tree_rng(9, 0);
        let mut order: Vec<usize> = (0..30).collect();
        let (mut wn, mut bn, mut t) = (vec![0.0; 2], 0.0, 1.0);
        for _ in 0..3 {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = 1.0 / (lambda * (t0 + t - 1.0));
                let m = target[i] * (wn[0] * rows[i][0] + wn[1] * rows[i][1] + bn);
                for j in 0..2 {
                    wn[j] *= 1.0 - eta * lambda;
                    if m < 1.0 {
                        wn[j] += eta * target[i] * rows[i][j];
                    }
                }
                if m < 1.0 {
                    bn += eta * target[i];
                }
                t += 1.0;
            }
        }
        for j in 0..2 {
            assert!((w[j] - wn[j]).abs() < 1e-9 * wn[j].abs().max(1.0));
        }
        assert!((b - bn).abs() < 1e-12);
    }
}
