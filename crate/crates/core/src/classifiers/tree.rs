//! CART-style binary decision tree with Gini impurity. Splits are searched
//! exhaustively over midpoints between consecutive distinct feature values;
//! ties keep the first (feature, threshold) in scan order for determinism.
//! Per-feature row orders are sorted once and partitioned stably down the
//! tree, so each node costs O(features × rows).

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) enum Node {
    Leaf { counts: [usize; 2] },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct TreeState {
    root: Node,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder {
    columns: Vec<Vec<f64>>,
    labels: Vec<usize>,
    min_leaf: usize,
    n_rows: usize,
}

impl Builder {
    /// Lowest weighted child Gini over all (feature, midpoint) candidates
    /// that leave ≥ min_leaf rows per side. Zero-gain splits are still
    /// returned when the node is impure: with distinct points that
    /// guarantees eventual purity (an unbounded tree memorizes the data).
    fn best_split(&self, sorted: &[Vec<u32>], total: [usize; 2]) -> Option<BestSplit> {
        let n = sorted[0].len();
        let mut best: Option<BestSplit> = None;
        for (feature, order) in sorted.iter().enumerate() {
            let col = &self.columns[feature];
            let mut left = [0usize; 2];
            for i in 0..n - 1 {
                let row = order[i] as usize;
                left[self.labels[row]] += 1;
                let v = col[row];
                let v_next = col[order[i + 1] as usize];
                if v == v_next {
                    continue;
                }
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score =
                    (n_left as f64 * gini(left) + n_right as f64 * gini(right)) / n as f64;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mut threshold = 0.5 * (v + v_next);
                    if threshold >= v_next {
                        // Midpoint rounded up to the right value; fall back
                        // so `value <= threshold` keeps the left block left.
                        threshold = v;
                    }
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        best
    }

    fn build(&self, sorted: Vec<Vec<u32>>, depth_left: Option<usize>) -> Node {
        let mut counts = [0usize; 2];
        for &row in &sorted[0] {
            counts[self.labels[row as usize]] += 1;
        }
        let n = sorted[0].len();
        if depth_left == Some(0)
            || counts[0] == 0
            || counts[1] == 0
            || n < 2 * self.min_leaf
        {
            return Node::Leaf { counts };
        }
        let Some(split) = self.best_split(&sorted, counts) else {
            return Node::Leaf { counts };
        };
        let goes_left: Vec<bool> = {
            let col = &self.columns[split.feature];
            let mut mask = vec![false; self.n_rows];
            for &row in &sorted[0] {
                mask[row as usize] = col[row as usize] <= split.threshold;
            }
            mask
        };
        // Stable partition of every feature order preserves sortedness.
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for order in sorted {
            let mut l = Vec::new();
            let mut r = Vec::new();
            for row in order {
                if goes_left[row as usize] {
                    l.push(row);
                } else {
                    r.push(row);
                }
            }
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let next_depth = depth_left.map(|d| d - 1);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(left_sorted, next_depth)),
            right: Box::new(self.build(right_sorted, next_depth)),
        }
    }
}

pub(super) fn fit(
    x: &FeatureMatrix,
    y: &[Label],
    max_depth: Option<usize>,
    min_leaf: usize,
) -> TreeState {
    let n = x.rows();
    let columns: Vec<Vec<f64>> = (0..x.cols)
        .map(|c| (0..n).map(|i| x.row(i)[c]).collect())
        .collect();
    let labels: Vec<usize> = y.iter().map(|l| l.index()).collect();
    let builder = Builder { columns, labels, min_leaf, n_rows: n };
    let sorted: Vec<Vec<u32>> = (0..x.cols)
        .map(|c| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| {
                builder.columns[c][a as usize]
                    .partial_cmp(&builder.columns[c][b as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    TreeState { root: builder.build(sorted, max_depth) }
}

impl TreeState {
    /// Leaf class frequencies for the leaf reached by `row`.
    pub(super) fn posterior(&self, row: &[f64]) -> [f64; 2] {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { counts } => {
                    let n = (counts[0] + counts[1]) as f64;
                    return [counts[0] as f64 / n, counts[1] as f64 / n];
                }
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}
