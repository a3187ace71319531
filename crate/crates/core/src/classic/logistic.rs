use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{argmax, Matrix, Standardizer};

/// Multinomial logistic regression on z-scored features, fitted by L-BFGS.
///
/// Minimizes mean cross-entropy + ||W||² / (2·C·n); intercepts are not
/// penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub scaler: Standardizer,
    /// `[class][feature]`
    pub weights: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Objective<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    l2: f64,
}

impl Objective<'_> {
    /// Parameters are laid out as C rows of (d weights, 1 intercept).
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (n, d, c) = (self.x.rows(), self.x.cols(), self.classes);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut z = vec![0.0; c];
        for (row, &yi) in self.x.iter_rows().zip(self.y) {
            for (k, zk) in z.iter_mut().enumerate() {
                let w = &theta[k * (d + 1)..(k + 1) * (d + 1)];
                *zk = w[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + w[d];
            }
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - z[yi];
            for k in 0..c {
                let p = (z[k] - lse).exp() - if k == yi { 1.0 } else { 0.0 };
                let g = &mut grad[k * (d + 1)..(k + 1) * (d + 1)];
                for (gj, xj) in g[..d].iter_mut().zip(row) {
                    *gj += p * xj;
                }
                g[d] += p;
            }
        }
        let inv_n = 1.0 / n as f64;
        loss *= inv_n;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        for k in 0..c {
            for j in 0..d {
                let t = theta[k * (d + 1) + j];
                loss += 0.5 * self.l2 * t * t;
                grad[k * (d + 1) + j] += self.l2 * t;
            }
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. Returns (iterations, converged),
/// where convergence means max |gradient| <= tol.
pub(crate) fn lbfgs(
    theta: &mut [f64],
    tol: f64,
    max_iter: usize,
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> (usize, bool) {
    const MEMORY: usize = 10;
    let p = theta.len();
    let mut grad = vec![0.0; p];
    let mut fx = f(theta, &mut grad);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut new_theta = vec![0.0; p];
    let mut new_grad = vec![0.0; p];
    for iter in 0..max_iter {
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= tol {
            return (iter, true);
        }
        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let mut step = if history.is_empty() {
            1.0 / dot(&grad, &grad).sqrt().max(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..60 {
            for ((n, t), d) in new_theta.iter_mut().zip(theta.iter()).zip(&dir) {
                *n = t + step * d;
            }
            let fnew = f(&new_theta, &mut new_grad);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = new_theta
                    .iter()
                    .zip(theta.iter())
                    .map(|(a, b)| a - b)
                    .collect();
                let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if history.len() == MEMORY {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                theta.copy_from_slice(&new_theta);
                grad.copy_from_slice(&new_grad);
                fx = fnew;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No decrease is possible along any direction we can find.
            let done = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= tol;
            return (iter + 1, done);
        }
    }
    let done = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= tol;
    (max_iter, done)
}

impl LogisticRegression {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        c: f64,
        tol: f64,
        max_iter: usize,
    ) -> Self {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let d = x.cols();
        let objective = Objective {
            x: &xs,
            y,
            classes: n_classes,
            l2: 1.0 / (c * x.rows() as f64),
        };
        let mut theta = vec![0.0; n_classes * (d + 1)];
        let (iterations, converged) = lbfgs(&mut theta, tol, max_iter, |t, g| objective.eval(t, g));
        if !converged {
            log::warn!("logistic regression stopped after {iterations} iterations without reaching tol {tol}");
        }
        let weights = theta.chunks(d + 1).map(|w| w[..d].to_vec()).collect();
        let intercept = theta.chunks(d + 1).map(|w| w[d]).collect();
        Self {
            scaler,
            weights,
            intercept,
            iterations,
            converged,
        }
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; row.len()];
        self.scaler.transform_row(row, &mut z);
        self.weights
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| dot(w, &z) + b)
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
    fn lbfgs_minimizes_rosenbrock() {
        let (iters, ok) = {
            let mut t = vec![-1.2, 1.0];
            let r = lbfgs(&mut t, 1e-8, 500, |t, g| {
                let (a, b) = (t[0], t[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            });
            assert!(
                (t[0] - 1.0).abs() < 1e-6 && (t[1] - 1.0).abs() < 1e-6,
                "{t:?}"
            );
            r
        };
        assert!(ok && iters < 500);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..15).map(|i| i % 3).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let obj = Objective {
            x: &x,
            y: &y,
            classes: 3,
            l2: 0.3,
        };
        let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; 12];
        obj.eval(&theta, &mut g);
        let mut scratch = vec![0.0; 12];
        for i in 0..12 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += 1e-6;
            tm[i] -= 1e-6;
            let num = (obj.eval(&tp, &mut scratch) - obj.eval(&tm, &mut scratch)) / 2e-6;
            assert!((num - g[i]).abs() < 1e-7, "param {i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn converges_on_overlapping_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y: Vec<usize> = rows
            .iter()
            .map(|r| usize::from(r[0] + 0.3 * rng.random_range(-1.0..1.0) > 0.0))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = LogisticRegression::fit(&x, &y, 2, 1.0, 1e-4, 1000);
        assert!(m.converged);
        let acc = m.predict(&x).iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc > 170, "{acc}");
    }
}
