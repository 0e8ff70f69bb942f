//! k-nearest-neighbor classifier. Stores the training matrix; posteriors
//! are Laplace-smoothed neighbor vote fractions (votes+1)/(m+2) where m is
//! the neighbor count actually used (min(k, train size)).

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct KnnState {
    k: usize,
    cols: usize,
    values: Vec<f64>,
    labels: Vec<Label>,
}

pub(super) fn fit(x: &FeatureMatrix, y: &[Label], k: usize) -> KnnState {
    KnnState { k, cols: x.cols, values: x.values.clone(), labels: y.to_vec() }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnState {
    fn train_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Indices of the k nearest training rows, distance ties broken by the
    /// lower training index.
    fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let n = self.labels.len();
        let m = self.k.min(n);
        // Keep the best m in a small sorted buffer; n is modest and m tiny.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(m + 1);
        for i in 0..n {
            let d = sq_dist(row, self.train_row(i));
            if best.len() == m {
                let worst = best[m - 1];
                if d > worst.0 || (d == worst.0 && i > worst.1) {
                    continue;
                }
            }
            let pos = best
                .binary_search_by(|probe| {
                    probe.0.partial_cmp(&d).unwrap().then(probe.1.cmp(&i))
                })
                .unwrap_err();
            best.insert(pos, (d, i));
            best.truncate(m);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub(super) fn posterior(&self, row: &[f64]) -> [f64; 2] {
        let neighbors = self.neighbors(row);
        let m = neighbors.len();
        let mut votes = [0usize; 2];
        for i in neighbors {
            votes[self.labels[i].index()] += 1;
        }
        let denom = (m + 2) as f64;
        [(votes[0] + 1) as f64 / denom, (votes[1] + 1) as f64 / denom]
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{matrix, two_blob_data};
    use super::super::{fit, ClassifierSpec};
    use crate::data::Label;
    use approx::assert_abs_diff_eq;

    #[test]
    fn k1_memorizes_training_set() {
        let (x, y) = two_blob_data(30, 0.1, 77);
        let model = fit(&ClassifierSpec::knn(1), &x, &y).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn laplace_smoothing_hand_value() {
        // Five Peak rows clustered at 10, one FalsePeak far away; a query at
        // the cluster has 5/5 Peak neighbors → Peak posterior (5+1)/(5+2).
        let rows = vec![
            vec![10.0],
            vec![10.1],
            vec![9.9],
            vec![10.2],
            vec![9.8],
            vec![-50.0],
        ];
        let y = vec![
            Label::Peak,
            Label::Peak,
            Label::Peak,
            Label::Peak,
            Label::Peak,
            Label::FalsePeak,
        ];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::knn(5), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![10.0]], &[Label::Peak])).unwrap();
        assert_abs_diff_eq!(p[0][1], 6.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0][0], 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn k_larger_than_train_uses_all_rows() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![Label::FalsePeak, Label::Peak, Label::Peak];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::knn(10), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![0.5]], &[Label::Peak])).unwrap();
        // All 3 rows vote: (1+1)/(3+2), (2+1)/(3+2).
        assert_abs_diff_eq!(p[0][0], 2.0 / 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0][1], 3.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_ties_prefer_lower_train_index() {
        // Two rows at the same distance from the query but with different
        // labels; k=1 must pick index 0.
        let rows = vec![vec![1.0], vec![-1.0]];
        let y = vec![Label::Peak, Label::FalsePeak];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::knn(1), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![0.0]], &[Label::Peak])).unwrap();
        assert!(p[0][1] > p[0][0]);
    }
}
