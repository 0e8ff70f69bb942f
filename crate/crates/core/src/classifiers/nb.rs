//! Gaussian naive Bayes: per-class feature means and (floored) population
//! variances, class priors from frequencies, posteriors via log-sum-exp.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(super) struct NbState {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

pub(super) fn fit(x: &FeatureMatrix, y: &[Label], floor: f64) -> NbState {
    let d = x.cols;
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    let mut var = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (i, label) in y.iter().enumerate() {
        let c = label.index();
        counts[c] += 1;
        for (m, v) in mean[c].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for c in 0..2 {
        for m in &mut mean[c] {
            *m /= counts[c] as f64;
        }
    }
    for (i, label) in y.iter().enumerate() {
        let c = label.index();
        for (j, v) in x.row(i).iter().enumerate() {
            let dlt = v - mean[c][j];
            var[c][j] += dlt * dlt;
        }
    }
    for c in 0..2 {
        for v in &mut var[c] {
            *v = (*v / counts[c] as f64).max(floor);
        }
    }
    let n = y.len() as f64;
    let log_prior = [
        (counts[0] as f64 / n).ln(),
        (counts[1] as f64 / n).ln(),
    ];
    NbState { log_prior, mean, var }
}

impl NbState {
    pub(super) fn posterior(&self, row: &[f64]) -> [f64; 2] {
        let mut log_like = [0.0f64; 2];
        for (c, slot) in log_like.iter_mut().enumerate() {
            let mut acc = self.log_prior[c];
            for (j, v) in row.iter().enumerate() {
                let var = self.var[c][j];
                let dlt = v - self.mean[c][j];
                acc += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + dlt * dlt / var);
            }
            *slot = acc;
        }
        let m = log_like[0].max(log_like[1]);
        let e0 = (log_like[0] - m).exp();
        let e1 = (log_like[1] - m).exp();
        let z = e0 + e1;
        [e0 / z, e1 / z]
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::matrix;
    use super::super::{fit, ClassifierSpec};
    use crate::data::Label;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_posterior_two_tight_clusters() {
        // Ten points at (0,0) labeled FalsePeak and ten at (10,10) labeled
        // Peak (tiny jitter keeps variances nonzero). A query at (0.1,0.1)
        // is overwhelmingly FalsePeak.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let j = i as f64 * 0.01;
            rows.push(vec![j, -j]);
            y.push(Label::FalsePeak);
            rows.push(vec![10.0 + j, 10.0 - j]);
            y.push(Label::Peak);
        }
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::gaussian_nb(), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![0.1, 0.1]], &[Label::Peak])).unwrap();
        assert!(p[0][0] > 0.999, "FalsePeak posterior {}", p[0][0]);
        assert_eq!(
            model.predict(&matrix(&[vec![0.1, 0.1]], &[Label::Peak])).unwrap(),
            vec![Label::FalsePeak]
        );
    }

    #[test]
    fn symmetric_midpoint_gives_half_half() {
        // Mirror-image classes around 0: at the midpoint the likelihoods
        // cancel and the priors are equal.
        let rows = vec![
            vec![-2.0],
            vec![-1.0],
            vec![1.0],
            vec![2.0],
        ];
        let y = vec![Label::FalsePeak, Label::FalsePeak, Label::Peak, Label::Peak];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::gaussian_nb(), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![0.0]], &[Label::Peak])).unwrap();
        assert_abs_diff_eq!(p[0][0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p[0][1], 0.5, epsilon = 1e-9);
        // Tie resolves to FalsePeak.
        assert_eq!(
            model.predict(&matrix(&[vec![0.0]], &[Label::Peak])).unwrap(),
            vec![Label::FalsePeak]
        );
    }

    #[test]
    fn variance_floor_prevents_division_by_zero() {
        // A constant feature per class would give zero variance without the
        // floor; the posterior must stay finite.
        let rows = vec![vec![1.0, 5.0], vec![1.0, 5.0], vec![2.0, 7.0], vec![2.0, 7.0]];
        let y = vec![Label::FalsePeak, Label::FalsePeak, Label::Peak, Label::Peak];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::gaussian_nb(), &x, &y).unwrap();
        for p in model.posterior(&x).unwrap() {
            assert!(p[0].is_finite() && p[1].is_finite());
            assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn unbalanced_priors_shift_the_boundary() {
        // Identical class-conditional variances, 2:1 prior for FalsePeak;
        // at the likelihood midpoint the prior must decide.
        let rows = vec![
            vec![-1.1],
            vec![-0.9],
            vec![-1.1],
            vec![-0.9],
            vec![0.9],
            vec![1.1],
        ];
        let y = vec![
            Label::FalsePeak,
            Label::FalsePeak,
            Label::FalsePeak,
            Label::FalsePeak,
            Label::Peak,
            Label::Peak,
        ];
        let x = matrix(&rows, &y);
        let model = fit(&ClassifierSpec::gaussian_nb(), &x, &y).unwrap();
        let p = model.posterior(&matrix(&[vec![0.0]], &[Label::Peak])).unwrap();
        assert!(p[0][0] > p[0][1]);
        assert_abs_diff_eq!(p[0][0], 2.0 / 3.0, epsilon = 1e-9);
    }
}
