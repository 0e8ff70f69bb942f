//! Decision-level fusion of the two feature-space streams: weighted
//! averaging of posteriors and a Gaussian naive Bayes meta-learner over the
//! streams' Peak posteriors.

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, label_from_posterior, ClassifierSpec, TrainedModel};
use crate::data::{FeatureMatrix, Label, SpaceTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FusionModel {
    /// Blend posteriors with nonnegative weights summing to 1.
    WeightedAverage { weights: [f64; 2] },
    /// Gaussian NB over the 2-dim meta-feature (Peak posterior per stream).
    MetaNb { model: TrainedModel },
}

impl FusionModel {
    /// Normalizes a raw nonnegative weight pair to sum to 1; an all-zero
    /// pair falls back to equal weights.
    pub fn weighted(raw: (f64, f64)) -> Result<FusionModel> {
        let (a, b) = raw;
        if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!(
                "fusion weights must be finite and nonnegative, got ({a}, {b})"
            )));
        }
        let sum = a + b;
        let weights = if sum > 0.0 { [a / sum, b / sum] } else { [0.5, 0.5] };
        Ok(FusionModel::WeightedAverage { weights })
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            FusionModel::WeightedAverage { .. } => "weighted",
            FusionModel::MetaNb { .. } => "meta",
        }
    }
}

fn check_posterior(p: &[f64; 2]) -> Result<()> {
    let sum = p[0] + p[1];
    if !p[0].is_finite() || !p[1].is_finite() || p[0] < 0.0 || p[1] < 0.0
        || (sum - 1.0).abs() > 1e-6
    {
        return Err(Error::Data(format!("malformed posterior ({}, {})", p[0], p[1])));
    }
    Ok(())
}

/// Argmax of w0·p_psr + w1·p_pca; ties go to FalsePeak.
pub fn fuse_weighted(p_psr: &[f64; 2], p_pca: &[f64; 2], weights: &[f64; 2]) -> Result<Label> {
    check_posterior(p_psr)?;
    check_posterior(p_pca)?;
    let blend = [
        weights[0] * p_psr[0] + weights[1] * p_pca[0],
        weights[0] * p_psr[1] + weights[1] * p_pca[1],
    ];
    Ok(label_from_posterior(&blend))
}

/// Fits the meta-learner on out-of-fold stream posteriors: row i is
/// (Peak posterior of the PSR stream, Peak posterior of the PCA stream).
pub fn fit_meta_nb(stream_peak_posteriors: &[[f64; 2]], y: &[Label]) -> Result<FusionModel> {
    if stream_peak_posteriors.len() != y.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: {} posterior rows vs {} labels",
            stream_peak_posteriors.len(),
            y.len()
        )));
    }
    let values: Vec<f64> = stream_peak_posteriors.iter().flatten().copied().collect();
    let x = FeatureMatrix::new(2, values, y.to_vec(), SpaceTag::Raw)?;
    // Posterior features live in [0, 1] and a confident stream emits a
    // near-constant cloud per class; without a floor on that scale the fitted
    // variance collapses and the meta-learner becomes hypersensitive to the
    // calibration shift between training-fold and deployed posteriors. The
    // floor corresponds to a standard deviation of a tenth of the range.
    let spec = ClassifierSpec::GaussianNb { variance_floor: 1e-2 };
    let model = classifiers::fit(&spec, &x, y)?;
    Ok(FusionModel::MetaNb { model })
}

/// Fuses one test row's stream posteriors into a label.
pub fn fuse_predict(model: &FusionModel, p_psr: &[f64; 2], p_pca: &[f64; 2]) -> Result<Label> {
    match model {
        FusionModel::WeightedAverage { weights } => fuse_weighted(p_psr, p_pca, weights),
        FusionModel::MetaNb { model } => {
            check_posterior(p_psr)?;
            check_posterior(p_pca)?;
            Ok(label_from_posterior(&model.posterior_row(&[p_psr[1], p_pca[1]])))
        }
    }
}

/// One fused decision with its inputs, exportable for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub row: usize,
    pub psr_peak_posterior: f64,
    pub pca_peak_posterior: f64,
    pub label: Label,
}

/// Writes fused decisions alongside both stream posteriors as CSV.
pub fn write_decisions_csv(decisions: &[FusionDecision], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "psr_peak_posterior", "pca_peak_posterior", "label"])?;
    for d in decisions {
        w.write_record([
            d.row.to_string(),
            format!("{:.9}", d.psr_peak_posterior),
            format!("{:.9}", d.pca_peak_posterior),
            d.label.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(p: f64) -> [f64; 2] {
        [1.0 - p, p]
    }

    #[test]
    fn degenerate_weights_follow_one_stream() {
        let psr = post(0.9);
        let pca = post(0.2);
        assert_eq!(fuse_weighted(&psr, &pca, &[1.0, 0.0]).unwrap(), Label::Peak);
        assert_eq!(fuse_weighted(&psr, &pca, &[0.0, 1.0]).unwrap(), Label::FalsePeak);
    }

    #[test]
    fn hand_blend_example() {
        // (0.6,0.4) and (0.2,0.8) at equal weight blend to (0.4,0.6) → Peak.
        let out = fuse_weighted(&[0.6, 0.4], &[0.2, 0.8], &[0.5, 0.5]).unwrap();
        assert_eq!(out, Label::Peak);
    }

    #[test]
    fn blend_tie_goes_to_false_peak() {
        let out = fuse_weighted(&[0.6, 0.4], &[0.4, 0.6], &[0.5, 0.5]).unwrap();
        assert_eq!(out, Label::FalsePeak);
    }

    #[test]
    fn weight_normalization_and_rescaling_invariance() {
        let a = FusionModel::weighted((0.2, 0.3)).unwrap();
        let b = FusionModel::weighted((2.0, 3.0)).unwrap();
        assert_eq!(a, b);
        if let FusionModel::WeightedAverage { weights } = a {
            assert!((weights[0] + weights[1] - 1.0).abs() < 1e-9);
        }
        let zero = FusionModel::weighted((0.0, 0.0)).unwrap();
        assert_eq!(zero, FusionModel::WeightedAverage { weights: [0.5, 0.5] });
        assert!(FusionModel::weighted((-1.0, 2.0)).is_err());
    }

    #[test]
    fn malformed_posterior_rejected() {
        assert!(fuse_weighted(&[0.9, 0.3], &[0.5, 0.5], &[0.5, 0.5]).is_err());
        assert!(fuse_weighted(&[f64::NAN, 1.0], &[0.5, 0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_stream_weights_reproduce_stream_f1_exactly() {
        use crate::eval::f1_score;
        let truth: Vec<Label> = (0..40)
            .map(|i| if i % 5 == 0 { Label::Peak } else { Label::FalsePeak })
            .collect();
        // Two imperfect, different streams.
        let psr: Vec<[f64; 2]> = (0..40)
            .map(|i| post(if i % 5 == 0 { 0.8 } else if i % 7 == 0 { 0.7 } else { 0.1 }))
            .collect();
        let pca: Vec<[f64; 2]> = (0..40)
            .map(|i| post(if i % 5 == 0 && i % 3 != 0 { 0.9 } else { 0.2 }))
            .collect();
        for (weights, stream) in [([1.0, 0.0], &psr), ([0.0, 1.0], &pca)] {
            let fused: Vec<Label> = psr
                .iter()
                .zip(&pca)
                .map(|(a, b)| fuse_weighted(a, b, &weights).unwrap())
                .collect();
            let direct: Vec<Label> =
                stream.iter().map(crate::classifiers::label_from_posterior).collect();
            assert_eq!(f1_score(&truth, &fused), f1_score(&truth, &direct));
        }
    }

    #[test]
    fn meta_on_correlated_streams_reaches_training_accuracy_one() {
        let y: Vec<Label> = (0..30)
            .map(|i| if i % 3 == 0 { Label::Peak } else { Label::FalsePeak })
            .collect();
        let feats: Vec<[f64; 2]> = y
            .iter()
            .map(|l| {
                if *l == Label::Peak { [0.99, 0.99] } else { [0.01, 0.01] }
            })
            .collect();
        let model = fit_meta_nb(&feats, &y).unwrap();
        for (f, want) in feats.iter().zip(&y) {
            let got = fuse_predict(&model, &post(f[0]), &post(f[1])).unwrap();
            assert_eq!(got, *want);
        }
    }

    #[test]
    fn meta_tracks_the_informative_stream() {
        use crate::eval::f1_score;
        use rand::Rng;
        // Stream 1 is pure noise, stream 2 is nearly perfect: fused F1 must
        // come within 0.02 of the perfect stream alone on held-out rows.
        let mut rng = crate::seed::rng(77);
        let make = |n: usize, rng: &mut rand_chacha::ChaCha12Rng| {
            let mut y = Vec::new();
            let mut feats = Vec::new();
            for i in 0..n {
                let label = if i % 4 == 0 { Label::Peak } else { Label::FalsePeak };
                let noise: f64 = rng.random_range(0.05..0.95);
                let good = if label == Label::Peak {
                    rng.random_range(0.9..0.999)
                } else {
                    rng.random_range(0.001..0.1)
                };
                y.push(label);
                feats.push([noise, good]);
            }
            (feats, y)
        };
        let (train_feats, train_y) = make(200, &mut rng);
        let (test_feats, test_y) = make(100, &mut rng);
        let model = fit_meta_nb(&train_feats, &train_y).unwrap();
        let fused: Vec<Label> = test_feats
            .iter()
            .map(|f| fuse_predict(&model, &post(f[0]), &post(f[1])).unwrap())
            .collect();
        let perfect: Vec<Label> = test_feats
            .iter()
            .map(|f| if f[1] > 0.5 { Label::Peak } else { Label::FalsePeak })
            .collect();
        let f_fused = f1_score(&test_y, &fused);
        let f_perfect = f1_score(&test_y, &perfect);
        assert!(
            f_fused >= f_perfect - 0.02,
            "fused {f_fused} vs perfect stream {f_perfect}"
        );
    }

    #[test]
    fn uninformative_streams_predict_the_prior_class() {
        // Both classes share identical meta-feature distributions, so the
        // likelihood ratio is 1 and the (majority FalsePeak) prior decides.
        let mut y = Vec::new();
        let mut feats = Vec::new();
        for f in [[0.3, 0.6], [0.7, 0.4]] {
            // Each class sees both points in the same 50/50 proportion.
            for _ in 0..5 {
                y.push(Label::Peak);
                feats.push(f);
            }
            for _ in 0..15 {
                y.push(Label::FalsePeak);
                feats.push(f);
            }
        }
        let model = fit_meta_nb(&feats, &y).unwrap();
        for f in &[[0.3, 0.6], [0.7, 0.4], [0.5, 0.5]] {
            let got = fuse_predict(&model, &post(f[0]), &post(f[1])).unwrap();
            assert_eq!(got, Label::FalsePeak);
        }
    }

    proptest! {
        /// When both streams agree, any valid weights return that label.
        #[test]
        fn agreement_is_preserved(p1 in 0.0..1.0f64, p2 in 0.0..1.0f64, w in 0.0..1.0f64) {
            let agree = (p1 > 0.5) == (p2 > 0.5);
            prop_assume!(agree && (p1 - 0.5).abs() > 1e-6 && (p2 - 0.5).abs() > 1e-6);
            let label = fuse_weighted(&post(p1), &post(p2), &[w, 1.0 - w]).unwrap();
            let want = if p1 > 0.5 { Label::Peak } else { Label::FalsePeak };
            prop_assert_eq!(label, want);
        }
    }
}
