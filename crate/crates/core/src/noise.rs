//! Random noise injection: corrupts a chosen fraction of records, either by
//! adding zero-mean Gaussian noise to every feature (σ = sqrt of the
//! dataset's mean power) or by flipping labels.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureRecord};
use crate::error::{Error, Result};
use crate::seed;

/// How corruption is applied to the chosen rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub enum NoiseMode {
    /// Add N(0, σ²) independently to all four features; labels untouched.
    #[default]
    FeatureAwgn,
    /// Toggle the label; features untouched.
    LabelFlip,
}


impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::FeatureAwgn => "awgn",
            NoiseMode::LabelFlip => "flip",
        }
    }

    pub fn parse(s: &str) -> Result<NoiseMode> {
        match s {
            "awgn" => Ok(NoiseMode::FeatureAwgn),
            "flip" => Ok(NoiseMode::LabelFlip),
            other => Err(Error::Config(format!(
                "unknown noise mode {other:?} (expected awgn or flip)"
            ))),
        }
    }
}

/// Corruption specification: fraction of rows, mode, RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { fraction: 0.0, mode: NoiseMode::FeatureAwgn, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) || !self.fraction.is_finite() {
            return Err(Error::Config(format!(
                "noise fraction must be in [0,1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Mean power of the dataset: the average of value² over all records and all
/// four feature columns.
pub fn mean_power(dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("mean_power of an empty dataset".into()));
    }
    let mut sum = 0.0f64;
    for r in &dataset.records {
        for v in r.features() {
            sum += v * v;
        }
    }
    Ok(sum / (dataset.len() as f64 * crate::data::N_FEATURES as f64))
}

/// Corrupts exactly round(fraction·N) records, chosen uniformly without
/// replacement by `spec.seed`. Uncorrupted rows are bit-identical to the
/// input; the output carries `spec` in its provenance.
pub fn inject(dataset: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = dataset.len();
    let k = (spec.fraction * n as f64).round() as usize;

    // Partial Fisher-Yates: the first k entries of a seed-determined shuffle.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(spec.seed, &["inject"]));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();

    let mut records = dataset.records.clone();
    match spec.mode {
        NoiseMode::LabelFlip => {
            for &i in &chosen {
                records[i].label = records[i].label.toggled();
            }
        }
        NoiseMode::FeatureAwgn => {
            let sigma = mean_power(dataset)?.sqrt();
            // One derived stream per corrupted row keeps the draw order
            // independent of which rows were chosen.
            for &i in &chosen {
                let mut row_rng =
                    seed::rng(seed::derive(spec.seed, &["awgn", &i.to_string()]));
                let r: &mut FeatureRecord = &mut records[i];
                let mut bump = |v: f64| -> f64 {
                    let z: f64 = StandardNormal.sample(&mut row_rng);
                    v + z * sigma
                };
                r.amplitude = bump(r.amplitude);
                r.variance = bump(r.variance);
                r.threshold = bump(r.threshold);
                r.snr = bump(r.snr);
            }
        }
    }

    let mut provenance = dataset.provenance.clone();
    provenance.noise = Some(*spec);
    Ok(Dataset::new(records, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Provenance};

    fn constant_dataset(n: usize, c: f64) -> Dataset {
        let records = (0..n)
            .map(|i| FeatureRecord {
                amplitude: c,
                variance: c,
                threshold: c,
                snr: c,
                label: if i % 10 == 0 { Label::Peak } else { Label::FalsePeak },
            })
            .collect();
        Dataset::new(records, Provenance::default())
    }

    #[test]
    fn mean_power_constant() {
        let ds = constant_dataset(50, 3.0);
        assert_eq!(mean_power(&ds).unwrap(), 9.0);
        let ds = constant_dataset(50, 0.0);
        assert_eq!(mean_power(&ds).unwrap(), 0.0);
    }

    #[test]
    fn mean_power_hand_average() {
        // Records (1,1,1,1) and (3,3,3,3): mean of squares = (1+9)/2 = 5.
        let mut ds = constant_dataset(2, 1.0);
        let r = &mut ds.records[1];
        r.amplitude = 3.0;
        r.variance = 3.0;
        r.threshold = 3.0;
        r.snr = 3.0;
        assert_eq!(mean_power(&ds).unwrap(), 5.0);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let ds = constant_dataset(40, 2.0);
        let out = inject(&ds, &NoiseSpec { fraction: 0.0, mode: NoiseMode::FeatureAwgn, seed: 9 })
            .unwrap();
        assert_eq!(out.records, ds.records);
    }

    #[test]
    fn full_flip_is_involution() {
        let ds = constant_dataset(40, 2.0);
        let spec = NoiseSpec { fraction: 1.0, mode: NoiseMode::LabelFlip, seed: 9 };
        let once = inject(&ds, &spec).unwrap();
        assert!(once.records.iter().zip(&ds.records).all(|(a, b)| a.label != b.label));
        let twice = inject(&once, &spec).unwrap();
        assert_eq!(twice.records, ds.records);
    }

    #[test]
    fn corrupted_count_exact_and_sigma_matches() {
        // 15% of 10,000 → exactly 1,500 corrupted rows; the per-feature
        // standard deviation of (corrupted − original) is within 5% of σ.
        let cfg = crate::prach::GenConfig { n_records: 10_000, seed: 2, ..Default::default() };
        let ds = crate::prach::generate_dataset(&cfg).unwrap();
        let spec = NoiseSpec { fraction: 0.15, mode: NoiseMode::FeatureAwgn, seed: 77 };
        let out = inject(&ds, &spec).unwrap();

        let sigma = mean_power(&ds).unwrap().sqrt();
        let mut deltas = Vec::new();
        let mut corrupted = 0usize;
        for (a, b) in out.records.iter().zip(&ds.records) {
            if a != b {
                corrupted += 1;
                for (x, y) in a.features().iter().zip(b.features()) {
                    deltas.push(x - y);
                }
            }
        }
        assert_eq!(corrupted, 1500);
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        assert!(
            (sd - sigma).abs() <= 0.05 * sigma,
            "empirical sd {sd} vs configured σ {sigma}"
        );
    }

    #[test]
    fn uncorrupted_rows_bit_identical_and_label_multiset_preserved() {
        let cfg = crate::prach::GenConfig { n_records: 400, seed: 4, ..Default::default() };
        let ds = crate::prach::generate_dataset(&cfg).unwrap();
        let spec = NoiseSpec { fraction: 0.25, mode: NoiseMode::FeatureAwgn, seed: 1 };
        let out = inject(&ds, &spec).unwrap();
        let changed = out
            .records
            .iter()
            .zip(&ds.records)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 100);
        assert_eq!(out.count(Label::Peak), ds.count(Label::Peak));

        // LabelFlip preserves the feature matrix.
        let spec = NoiseSpec { fraction: 0.25, mode: NoiseMode::LabelFlip, seed: 1 };
        let out = inject(&ds, &spec).unwrap();
        for (a, b) in out.records.iter().zip(&ds.records) {
            assert_eq!(a.features(), b.features());
        }
    }

    #[test]
    fn injection_deterministic() {
        let ds = constant_dataset(100, 1.5);
        let spec = NoiseSpec { fraction: 0.3, mode: NoiseMode::FeatureAwgn, seed: 123 };
        let a = inject(&ds, &spec).unwrap();
        let b = inject(&ds, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_fraction() {
        let ds = constant_dataset(10, 1.0);
        let spec = NoiseSpec { fraction: 1.5, mode: NoiseMode::LabelFlip, seed: 0 };
        assert!(inject(&ds, &spec).is_err());
    }
}
