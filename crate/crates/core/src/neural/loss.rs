//! Class-weighted softmax cross-entropy.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::NeuralError;

/// How per-class weights are derived from training counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `w_y = N_classes · N_y / N`: frequent classes weigh more.
    #[default]
    Proportional,
    /// `w_y = N / (N_classes · N_y)`: the usual rebalancing.
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
    pub counts: Vec<usize>,
    pub n: usize,
    pub n_classes: usize,
    pub mode: WeightMode,
}

impl ClassWeights {
    /// Mean of `w[y_n]` over the training labels the weights came from.
    pub fn mean_sample_weight(&self) -> f64 {
        let total: f64 = self
            .counts
            .iter()
            .zip(&self.w)
            .map(|(&c, w)| c as f64 * w)
            .sum();
        total / self.n as f64
    }
}

/// Weights from class-index labels in `0..n_classes`. Classes absent from
/// the training set get weight 0.
pub fn class_weights(
    labels: &[usize],
    n_classes: usize,
    mode: WeightMode,
) -> Result<ClassWeights, NeuralError> {
    if labels.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(NeuralError::LabelOutOfRange {
                label: y,
                classes: n_classes,
            });
        }
        counts[y] += 1;
    }
    let n = labels.len();
    let w = counts
        .iter()
        .map(|&c| match (c, mode) {
            (0, _) => 0.0,
            // Integer products first so balanced counts give exactly 1.
            (c, WeightMode::Proportional) => (n_classes * c) as f64 / n as f64,
            (c, WeightMode::Inverse) => n as f64 / (n_classes * c) as f64,
        })
        .collect();
    Ok(ClassWeights {
        w,
        counts,
        n,
        n_classes,
        mode,
    })
}

/// Sum over the batch of `-w[y_n] · log softmax(x_n)[y_n]`, with the gradient
/// with respect to the row-major `batch × classes` logits.
pub fn weighted_ce_loss<T: Float>(
    logits: &[T],
    classes: usize,
    labels: &[usize],
    w: &[T],
) -> Result<(T, Vec<T>), NeuralError> {
    if w.len() != classes || logits.len() != labels.len() * classes {
        return Err(NeuralError::ShapeMismatch(format!(
            "{} logits, {} labels, {} weights for {classes} classes",
            logits.len(),
            labels.len(),
            w.len()
        )));
    }
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (n, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(NeuralError::LabelOutOfRange { label: y, classes });
        }
        let row = &logits[n * classes..(n + 1) * classes];
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let sum = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp());
        let lse = m + sum.ln();
        loss = loss - w[y] * (row[y] - lse);
        let g = &mut grad[n * classes..(n + 1) * classes];
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *gc = w[y] * if c == y { p - T::one() } else { p };
        }
    }
    Ok((loss, grad))
}

/// Plain cross-entropy: [`weighted_ce_loss`] with unit weights.
pub fn ce_loss<T: Float>(
    logits: &[T],
    classes: usize,
    labels: &[usize],
) -> Result<(T, Vec<T>), NeuralError> {
    weighted_ce_loss(logits, classes, labels, &vec![T::one(); classes])
}
