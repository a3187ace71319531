use serde::{Deserialize, Serialize};

use super::{argmax, Matrix};

/// Gaussian naive Bayes with frequency priors. Every per-class variance is
/// inflated by `var_smoothing` times the largest feature variance of the
/// training set, which keeps constant features from producing zero variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: Vec<f64>,
    /// `[class][feature]`
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub epsilon: f64,
}

fn column_variances(x: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &r in rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl GaussianNb {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, var_smoothing: f64) -> Self {
        let all: Vec<usize> = (0..x.rows()).collect();
        let (_, total_var) = column_variances(x, &all);
        let max_var = total_var.iter().cloned().fold(0.0, f64::max);
        let epsilon = if max_var > 0.0 {
            var_smoothing * max_var
        } else {
            var_smoothing
        };
        // A zero epsilon with a constant feature would divide by zero.
        let epsilon = epsilon.max(f64::MIN_POSITIVE);

        let mut log_prior = Vec::with_capacity(n_classes);
        let mut mean = Vec::with_capacity(n_classes);
        let mut var = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let rows: Vec<usize> = all.iter().copied().filter(|&i| y[i] == c).collect();
            let (m, v) = column_variances(x, &rows);
            log_prior.push((rows.len() as f64 / x.rows() as f64).ln());
            mean.push(m);
            var.push(v.into_iter().map(|s| s + epsilon).collect());
        }
        Self {
            log_prior,
            mean,
            var,
            epsilon,
        }
    }

    /// Unnormalized log posterior of each class for one row.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        (0..self.log_prior.len())
            .map(|c| {
                let ll: f64 = row
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((x, m), v)| ln_2pi + v.ln() + (x - m) * (x - m) / v)
                    .sum();
                self.log_prior[c] - 0.5 * ll
            })
            .collect()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows()
            .map(|r| argmax(&self.joint_log_likelihood(r)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Density product written out directly from the Gaussian formula.
    fn oracle_scores(x: &Matrix, y: &[usize], c: usize, q: &[f64], smoothing: f64) -> Vec<f64> {
        let n = x.rows();
        let d = x.cols();
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let mu = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            let v = (0..n).map(|i| (x.get(i, j) - mu).powi(2)).sum::<f64>() / n as f64;
            max_var = max_var.max(v);
        }
        let eps = smoothing * max_var;
        (0..c)
            .map(|k| {
                let idx: Vec<usize> = (0..n).filter(|&i| y[i] == k).collect();
                let nk = idx.len() as f64;
                let mut s = (nk / n as f64).ln();
                for j in 0..d {
                    let mu = idx.iter().map(|&i| x.get(i, j)).sum::<f64>() / nk;
                    let v = idx.iter().map(|&i| (x.get(i, j) - mu).powi(2)).sum::<f64>() / nk + eps;
                    let dens = (-(q[j] - mu).powi(2) / (2.0 * v)).exp()
                        / (2.0 * std::f64::consts::PI * v).sqrt();
                    s += dens.ln();
                }
                s
            })
            .collect()
    }

    #[test]
    fn matches_density_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.random_range(6..20);
            let d = rng.random_range(1..4);
            let c = rng.random_range(2..4);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let mut y: Vec<usize> = (0..n).map(|i| i % c).collect();
            y.rotate_left(rng.random_range(0..n));
            let x = Matrix::from_rows(&rows).unwrap();
            let nb = GaussianNb::fit(&x, &y, c, 1e-9);
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = nb.joint_log_likelihood(&q);
            let want = oracle_scores(&x, &y, c, &q, 1e-9);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{g} vs {w}");
            }
            assert_eq!(argmax(&got), argmax(&want));
        }
    }

    #[test]
    fn constant_feature_is_harmless() {
        let x = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![0.1, 1.0],
            vec![5.0, 1.0],
            vec![5.1, 1.0],
        ])
        .unwrap();
        let nb = GaussianNb::fit(&x, &[0, 0, 1, 1], 2, 1e-9);
        assert_eq!(nb.predict(&x), vec![0, 0, 1, 1]);
    }
}
