//! Gini CART grown to purity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Features examined per split; `>= d` means all, in index order.
    pub max_features: usize,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// RNG for tree `index` of a model seeded with `seed`.
pub(crate) fn tree_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    /// Σ_left c²/n_left + Σ_right c²/n_right; larger means lower weighted Gini.
    purity: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.purity > o.purity || (self.purity == o.purity && self.feature < o.feature)
            }
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    features: Vec<usize>,
    buf: Vec<(f64, usize)>,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl Builder<'_> {
    fn best_split_on(
        &mut self,
        rows: &[usize],
        feature: usize,
        parent: &[usize],
    ) -> Option<Candidate> {
        self.buf.clear();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let v = self.x.get(r, feature);
            lo = lo.min(v);
            hi = hi.max(v);
            self.buf.push((v, self.y[r]));
        }
        if lo == hi {
            return None;
        }
        self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let n = rows.len();
        self.left.clear();
        self.left.resize(self.n_classes, 0);
        self.right.clear();
        self.right.extend_from_slice(parent);
        let mut sq_left = 0.0f64;
        let mut sq_right: f64 = parent.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            let (v, k) = self.buf[i];
            sq_left += (2 * self.left[k] + 1) as f64;
            sq_right -= (2 * self.right[k] - 1) as f64;
            self.left[k] += 1;
            self.right[k] -= 1;
            let next = self.buf[i + 1].0;
            if v == next {
                continue;
            }
            let nl = (i + 1) as f64;
            let purity = sq_left / nl + sq_right / (n as f64 - nl);
            if best.is_none_or(|b| purity > b.purity) {
                let mid = v + (next - v) / 2.0;
                let threshold = if mid < next { mid } else { v };
                best = Some(Candidate {
                    feature,
                    threshold,
                    purity,
                });
            }
        }
        best
    }

    fn choose_split(
        &mut self,
        rows: &[usize],
        counts: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Option<Candidate> {
        let d = self.x.cols();
        let mut best: Option<Candidate> = None;
        if self.params.max_features >= d {
            for f in 0..d {
                if let Some(c) = self.best_split_on(rows, f, counts) {
                    if c.beats(&best) {
                        best = Some(c);
                    }
                }
            }
            return best;
        }
        let mut features = std::mem::take(&mut self.features);
        features.shuffle(rng);
        // Draw max_features candidates; keep drawing past that only while no
        // valid split has been found.
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.params.max_features && best.is_some() {
                break;
            }
            if let Some(c) = self.best_split_on(rows, f, counts) {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        self.features = features;
        best
    }
}

impl DecisionTree {
    /// Grows a tree on `rows` (duplicates allowed, e.g. a bootstrap draw).
    pub fn grow(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        rows: &[usize],
        params: TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        let mut b = Builder {
            x,
            y,
            n_classes,
            params,
            features: (0..x.cols()).collect(),
            buf: Vec::with_capacity(rows.len()),
            left: Vec::new(),
            right: Vec::new(),
        };
        let mut nodes = vec![Node::Leaf { class: 0 }];
        let mut rows = rows.to_vec();
        // (node index, start, end, depth)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let slice = &mut rows[start..end];
            let mut counts = vec![0usize; n_classes];
            for &r in slice.iter() {
                counts[y[r]] += 1;
            }
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_cap = params.max_depth.is_some_and(|m| depth >= m);
            let split = if pure || depth_cap || slice.len() < 2 {
                None
            } else {
                b.choose_split(slice, &counts, rng)
            };
            let Some(split) = split else {
                nodes[id] = Node::Leaf {
                    class: majority(&counts),
                };
                continue;
            };
            // Partition in place: rows going left first, relative order kept.
            let (mut l, mut r): (Vec<usize>, Vec<usize>) = slice
                .iter()
                .partition(|&&row| x.get(row, split.feature) <= split.threshold);
            let mid = start + l.len();
            l.append(&mut r);
            slice.copy_from_slice(&l);

            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { class: 0 });
            nodes.push(Node::Leaf { class: 0 });
            nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        DecisionTree { nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grow_all(x: &Matrix, y: &[usize], c: usize) -> DecisionTree {
        let rows: Vec<usize> = (0..x.rows()).collect();
        let params = TreeParams {
            max_features: x.cols(),
            max_depth: None,
        };
        DecisionTree::grow(x, y, c, &rows, params, &mut tree_rng(0, 0))
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let y = [0, 1, 1, 0];
        let t = grow_all(&x, &y, 2);
        for i in 0..4 {
            assert_eq!(t.predict_row(x.row(i)), y[i]);
        }
    }

    #[test]
    fn midpoint_threshold_and_lowest_feature_tie() {
        // Both features separate perfectly; feature 0 must win the tie.
        let x = Matrix::from_rows(&[vec![1.0, 10.0], vec![3.0, 30.0]]).unwrap();
        let t = grow_all(&x, &[0, 1], 2);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 2.0,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn pure_on_distinct_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..6).map(|_| rng.random()).collect())
            .collect();
        let y: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = grow_all(&x, &y, 4);
        for i in 0..200 {
            assert_eq!(t.predict_row(x.row(i)), y[i]);
        }
    }

    #[test]
    fn identical_rows_become_majority_leaf() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let t = grow_all(&x, &[1, 0, 1], 2);
        assert_eq!(t.nodes, vec![Node::Leaf { class: 1 }]);
        // Count tie resolves to the lower class.
        let t = grow_all(
            &Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            &[1, 0],
            2,
        );
        assert_eq!(t.nodes, vec![Node::Leaf { class: 0 }]);
    }

    #[test]
    fn depth_cap() {
        let x = Matrix::from_rows(&(0..16).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let rows: Vec<usize> = (0..16).collect();
        let params = TreeParams {
            max_features: 1,
            max_depth: Some(2),
        };
        let t = DecisionTree::grow(&x, &y, 2, &rows, params, &mut tree_rng(0, 0));
        assert!(t.depth() <= 2);
    }
}
