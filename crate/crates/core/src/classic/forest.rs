use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{tree_rng, DecisionTree, TreeParams};
use super::Matrix;

/// Bagged Gini trees with per-split feature subsampling. Tree `t` draws all
/// its randomness from stream `t` of the model seed, so the forest does not
/// depend on how trees are scheduled across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        n_trees: usize,
        bootstrap: bool,
        max_features: usize,
        max_depth: Option<usize>,
        seed: u64,
    ) -> Self {
        let n = x.rows();
        let params = TreeParams {
            max_features,
            max_depth,
        };
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t as u64);
                let rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::grow(x, y, n_classes, &rows, params, &mut rng)
            })
            .collect();
        Self { n_classes, trees }
    }

    /// Majority vote; tied votes go to the lowest class index.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let mut votes = vec![0usize; self.n_classes];
                for t in &self.trees {
                    votes[t.predict_row(row)] += 1;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::{fit, ClassifierSpec, Hyperparameters, MaxFeatures, ModelState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_unbagged_tree_equals_cart() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..7).map(|_| rng.random()).collect())
            .collect();
        let y: Vec<String> = (0..120)
            .map(|_| format!("k{}", rng.random_range(0..3)))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cart = fit(
            &ClassifierSpec {
                params: Hyperparameters::Cart { max_depth: None },
                seed: 4,
            },
            &x,
            &y,
        )
        .unwrap();
        let rf = fit(
            &ClassifierSpec {
                params: Hyperparameters::Rf {
                    n_trees: 1,
                    bootstrap: false,
                    max_features: MaxFeatures::All,
                    max_depth: None,
                },
                seed: 4,
            },
            &x,
            &y,
        )
        .unwrap();
        let (ModelState::Cart(tree), ModelState::Rf(forest)) = (&cart.state, &rf.state) else {
            panic!("unexpected model states");
        };
        assert_eq!(&forest.trees[0], tree);
        assert_eq!(cart.predict(&x).unwrap(), rf.predict(&x).unwrap());
    }

    #[test]
    fn vote_tie_goes_to_lowest_class() {
        let forest = RandomForest {
            n_classes: 3,
            trees: vec![
                DecisionTree {
                    nodes: vec![crate::classic::Node::Leaf { class: 2 }],
                },
                DecisionTree {
                    nodes: vec![crate::classic::Node::Leaf { class: 1 }],
                },
            ],
        };
        assert_eq!(forest.predict(&Matrix::zeros(1, 1)), vec![1]);
    }
}
