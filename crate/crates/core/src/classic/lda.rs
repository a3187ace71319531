use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{argmax, ClassifierError, Matrix};

/// Linear discriminant analysis with a shared within-class covariance.
///
/// The pooled covariance is inverted through its eigendecomposition with
/// every eigenvalue floored at `ridge` times the mean variance, so singular
/// covariances (e.g. always-zero histogram bins) stay usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    /// `[class][feature]` discriminant weights.
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

impl Lda {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        ridge: f64,
    ) -> Result<Self, ClassifierError> {
        let (n, d) = (x.rows(), x.cols());
        let mut means = vec![vec![0.0; d]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (r, &c) in x.iter_rows().zip(y) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, &k) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= k.max(1) as f64);
        }

        let mut centered = DMatrix::<f64>::zeros(n, d);
        for (i, (r, &c)) in x.iter_rows().zip(y).enumerate() {
            for j in 0..d {
                centered[(i, j)] = r[j] - means[c][j];
            }
        }
        let dof = if n > n_classes { n - n_classes } else { n };
        let cov = centered.tr_mul(&centered) / dof as f64;

        let mean_var = cov.trace() / d.max(1) as f64;
        let floor = if mean_var > 0.0 {
            ridge * mean_var
        } else {
            ridge
        }
        .max(f64::MIN_POSITIVE);
        let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0).ok_or_else(|| {
            ClassifierError::Numerical("covariance eigendecomposition did not converge".into())
        })?;
        let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
        let v = &eig.eigenvectors;
        let precision = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();

        let mut coef = Vec::with_capacity(n_classes);
        let mut intercept = Vec::with_capacity(n_classes);
        for (m, &k) in means.iter().zip(&counts) {
            let mu = DVector::from_column_slice(m);
            let w = &precision * &mu;
            let prior = k as f64 / n as f64;
            intercept.push(-0.5 * mu.dot(&w) + prior.ln());
            coef.push(w.iter().copied().collect());
        }
        Ok(Self { coef, intercept })
    }

    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| argmax(&self.decision(r))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_identity_covariance() {
        // Class means (0,0) and (2,0) with isotropic within-class scatter.
        let offsets = [(-1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        let mut rows = Vec::new();
        for cx in [0.0, 2.0] {
            rows.extend(offsets.iter().map(|&(a, b)| vec![cx + a, b]));
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let lda = Lda::fit(&x, &[0, 0, 0, 0, 1, 1, 1, 1], 2, 0.0).unwrap();
        // Equal priors, so the boundary sits halfway between the means.
        let q = Matrix::from_rows(&[vec![0.9, 5.0], vec![1.1, -5.0]]).unwrap();
        assert_eq!(lda.predict(&q), vec![0, 1]);
        let s = lda.decision(&[1.0, 0.0]);
        assert!((s[0] - s[1]).abs() < 1e-9);
    }

    #[test]
    fn singular_covariance_is_regularized() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![3.0, 0.0],
            vec![3.2, 0.0],
        ])
        .unwrap();
        let lda = Lda::fit(&x, &[0, 0, 1, 1], 2, 1e-6).unwrap();
        assert!(lda.coef.iter().flatten().all(|v| v.is_finite()));
        assert_eq!(lda.predict(&x), vec![0, 0, 1, 1]);
    }
}
