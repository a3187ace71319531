//! The seven classical classifiers run on handcrafted feature vectors, plus
//! cross-validation over a fold assignment.
//!
//! Class lists are always sorted lexicographically, so "lowest class index"
//! and "lexicographically smallest label" are the same tie-break.

mod forest;
mod knn;
mod lda;
mod logistic;
mod matrix;
mod naive_bayes;
mod svm;
mod tree;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::RandomForest;
pub use knn::Knn;
pub use lda::Lda;
pub use logistic::LogisticRegression;
pub use matrix::{Matrix, Standardizer};
pub use naive_bayes::GaussianNb;
pub use svm::LinearSvm;
pub use tree::{DecisionTree, Node, TreeParams};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("fold assignment does not cover sample {0}")]
    UncoveredSample(String),
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lr,
    Lda,
    Nb,
    Knn,
    Svm,
    Cart,
    Rf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Lr,
        Algorithm::Lda,
        Algorithm::Nb,
        Algorithm::Knn,
        Algorithm::Svm,
        Algorithm::Cart,
        Algorithm::Rf,
    ];

    pub fn default_params(self) -> Hyperparameters {
        match self {
            Algorithm::Lr => Hyperparameters::Lr {
                c: 1.0,
                tol: 1e-4,
                max_iter: 1000,
            },
            Algorithm::Lda => Hyperparameters::Lda { ridge: 1e-6 },
            Algorithm::Nb => Hyperparameters::Nb {
                var_smoothing: 1e-9,
            },
            Algorithm::Knn => Hyperparameters::Knn { k: 5 },
            Algorithm::Svm => Hyperparameters::Svm {
                lambda: 1e-4,
                epochs: 20,
            },
            Algorithm::Cart => Hyperparameters::Cart { max_depth: None },
            Algorithm::Rf => Hyperparameters::Rf {
                n_trees: 100,
                bootstrap: true,
                max_features: MaxFeatures::Sqrt,
                max_depth: None,
            },
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Lr => "LR",
            Algorithm::Lda => "LDA",
            Algorithm::Nb => "NB",
            Algorithm::Knn => "KNN",
            Algorithm::Svm => "SVM",
            Algorithm::Cart => "CART",
            Algorithm::Rf => "RF",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Hyperparameters {
    /// Multinomial logistic regression on z-scored features; `c` is the
    /// inverse L2 strength.
    Lr {
        c: f64,
        tol: f64,
        max_iter: usize,
    },
    Lda {
        ridge: f64,
    },
    Nb {
        var_smoothing: f64,
    },
    Knn {
        k: usize,
    },
    /// One-vs-rest linear SVM, hinge loss + L2, SGD on z-scored features.
    Svm {
        lambda: f64,
        epochs: usize,
    },
    Cart {
        max_depth: Option<usize>,
    },
    Rf {
        n_trees: usize,
        bootstrap: bool,
        max_features: MaxFeatures,
        max_depth: Option<usize>,
    },
}

impl Hyperparameters {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparameters::Lr { .. } => Algorithm::Lr,
            Hyperparameters::Lda { .. } => Algorithm::Lda,
            Hyperparameters::Nb { .. } => Algorithm::Nb,
            Hyperparameters::Knn { .. } => Algorithm::Knn,
            Hyperparameters::Svm { .. } => Algorithm::Svm,
            Hyperparameters::Cart { .. } => Algorithm::Cart,
            Hyperparameters::Rf { .. } => Algorithm::Rf,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyperparameter(m.to_string()));
        match *self {
            Hyperparameters::Lr { c, tol, max_iter } => {
                if !(c > 0.0) {
                    return bad("LR regularization C must be > 0");
                }
                if !(tol > 0.0) || max_iter == 0 {
                    return bad("LR needs tol > 0 and max_iter >= 1");
                }
            }
            Hyperparameters::Lda { ridge } if !(ridge >= 0.0) => {
                return bad("LDA ridge must be >= 0")
            }
            Hyperparameters::Nb { var_smoothing } if !(var_smoothing >= 0.0) => {
                return bad("NB var_smoothing must be >= 0")
            }
            Hyperparameters::Knn { k: 0 } => return bad("KNN k must be >= 1"),
            Hyperparameters::Svm { lambda, epochs } if !(lambda > 0.0) || epochs == 0 => {
                return bad("SVM needs lambda > 0 and epochs >= 1")
            }
            Hyperparameters::Cart { max_depth: Some(0) }
            | Hyperparameters::Rf {
                max_depth: Some(0), ..
            } => return bad("max_depth must be >= 1"),
            Hyperparameters::Rf { n_trees: 0, .. } => return bad("RF needs at least one tree"),
            Hyperparameters::Rf {
                max_features: MaxFeatures::Count(0),
                ..
            } => return bad("RF max_features must be >= 1"),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub params: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            params: algorithm.default_params(),
            seed,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.params.algorithm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelState {
    Lr(LogisticRegression),
    Lda(Lda),
    Nb(GaussianNb),
    Knn(Knn),
    Svm(LinearSvm),
    Cart(DecisionTree),
    Rf(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub class_list: Vec<String>,
    pub n_features: usize,
    pub state: ModelState,
}

/// Maps labels to indices of the sorted class list.
pub fn encode_labels(y: &[String]) -> (Vec<String>, Vec<usize>) {
    let classes: Vec<String> = y
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label from set"))
        .collect();
    (classes, idx)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_finite(x: &Matrix) -> Result<(), ClassifierError> {
    if let Some(pos) = x.data().iter().position(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFiniteFeature {
            row: pos / x.cols().max(1),
            col: pos % x.cols().max(1),
        });
    }
    Ok(())
}

/// Trains `spec` on rows of `x` labelled `y`. Deterministic in
/// (spec, x, y), seed included.
pub fn fit(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[String],
) -> Result<TrainedModel, ClassifierError> {
    spec.params.validate()?;
    if x.rows() != y.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(ClassifierError::TooFewRows(x.rows()));
    }
    check_finite(x)?;
    let (class_list, yi) = encode_labels(y);
    if class_list.len() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let c = class_list.len();
    let state = match spec.params {
        Hyperparameters::Lr {
            c: strength,
            tol,
            max_iter,
        } => ModelState::Lr(LogisticRegression::fit(x, &yi, c, strength, tol, max_iter)),
        Hyperparameters::Lda { ridge } => ModelState::Lda(Lda::fit(x, &yi, c, ridge)?),
        Hyperparameters::Nb { var_smoothing } => {
            ModelState::Nb(GaussianNb::fit(x, &yi, c, var_smoothing))
        }
        Hyperparameters::Knn { k } => ModelState::Knn(Knn::fit(x, &yi, c, k)),
        Hyperparameters::Svm { lambda, epochs } => {
            ModelState::Svm(LinearSvm::fit(x, &yi, c, lambda, epochs, spec.seed))
        }
        Hyperparameters::Cart { max_depth } => {
            let params = TreeParams {
                max_features: x.cols(),
                max_depth,
            };
            let rows: Vec<usize> = (0..x.rows()).collect();
            ModelState::Cart(DecisionTree::grow(
                x,
                &yi,
                c,
                &rows,
                params,
                &mut tree::tree_rng(spec.seed, 0),
            ))
        }
        Hyperparameters::Rf {
            n_trees,
            bootstrap,
            max_features,
            max_depth,
        } => ModelState::Rf(RandomForest::fit(
            x,
            &yi,
            c,
            n_trees,
            bootstrap,
            max_features.resolve(x.cols()),
            max_depth,
            spec.seed,
        )),
    };
    Ok(TrainedModel {
        spec: *spec,
        class_list,
        n_features: x.cols(),
        state,
    })
}

impl TrainedModel {
    /// Class indices into `class_list`, one per row.
    pub fn predict_indices(&self, x: &Matrix) -> Result<Vec<usize>, ClassifierError> {
        if x.cols() != self.n_features {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(match &self.state {
            ModelState::Lr(m) => m.predict(x),
            ModelState::Lda(m) => m.predict(x),
            ModelState::Nb(m) => m.predict(x),
            ModelState::Knn(m) => m.predict(x),
            ModelState::Svm(m) => m.predict(x),
            ModelState::Cart(m) => (0..x.rows()).map(|i| m.predict_row(x.row(i))).collect(),
            ModelState::Rf(m) => m.predict(x),
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<String>, ClassifierError> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|i| self.class_list[i].clone())
            .collect())
    }
}

pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<String>, ClassifierError> {
    model.predict(x)
}

pub fn accuracy(truth: &[String], pred: &[String]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Out-of-fold prediction for every row.
    pub predictions: Vec<String>,
}

/// k-fold cross-validation: for each fold, fit on the other folds and score
/// on this one. `fold_of_row[i]` is row i's fold in `0..k`; empty folds are
/// skipped. A training part with a single class predicts that class.
pub fn cross_validate(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[String],
    fold_of_row: &[usize],
    k: usize,
) -> Result<CvOutcome, ClassifierError> {
    if fold_of_row.len() != x.rows() || y.len() != x.rows() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.rows(),
            got: fold_of_row.len().min(y.len()),
        });
    }
    let mut predictions = vec![String::new(); x.rows()];
    let mut fold_accuracies = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<usize> = (0..x.rows()).filter(|&i| fold_of_row[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train: Vec<usize> = (0..x.rows()).filter(|&i| fold_of_row[i] != f).collect();
        let ytr: Vec<String> = train.iter().map(|&i| y[i].clone()).collect();
        let xte = x.select_rows(&test);
        let pred = if ytr.iter().all(|l| *l == ytr[0]) && !ytr.is_empty() {
            log::warn!(
                "fold {f}: training part has the single class {}; predicting it",
                ytr[0]
            );
            vec![ytr[0].clone(); test.len()]
        } else {
            fit(spec, &x.select_rows(&train), &ytr)?.predict(&xte)?
        };
        let truth: Vec<String> = test.iter().map(|&i| y[i].clone()).collect();
        fold_accuracies.push(accuracy(&truth, &pred));
        for (&i, p) in test.iter().zip(pred) {
            predictions[i] = p;
        }
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len().max(1) as f64;
    Ok(CvOutcome {
        fold_accuracies,
        mean_accuracy,
        predictions,
    })
}
