//! Synthetic PRACH detection-candidate generator.
//!
//! Stands in for a base-station measurement rig: genuine preambles are
//! Zadoff-Chu sequences received through AWGN and correlated against their
//! replica; false candidates are correlations of pure noise. Each candidate
//! yields the four detector features (peak amplitude, floor variance,
//! adaptive threshold, estimated SNR) plus its ground-truth label.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean_normalize, Dataset, FeatureRecord, Label, Provenance};
use crate::error::{Error, Result};
use crate::seed;

/// Threshold feature constant: threshold = C_THR · sqrt(floor variance).
/// Calibrated once so clean data is threshold-separable: the scaled noise
/// floor sits above the strongest false peak and below the weakest genuine
/// peak at the default SNR settings.
pub const C_THR: f64 = 12.0;

/// A Zadoff-Chu sequence: x_u[n] = exp(−jπ·u·n·(n+1)/N) for odd N.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    pub root: usize,
    pub length: usize,
    pub samples: Vec<Complex64>,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Generates the length-N Zadoff-Chu sequence for a valid (root, length).
///
/// Requires odd `length ≥ 3`, `1 ≤ root < length`, and gcd(root, length) = 1;
/// those conditions give the constant-amplitude, ideal-autocorrelation
/// sequence family used for PRACH preambles.
pub fn generate_zc(root: usize, length: usize) -> Result<ZcSequence> {
    if length < 3 || length.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "zc length must be odd and ≥ 3, got {length}"
        )));
    }
    if root == 0 || root >= length {
        return Err(Error::Config(format!(
            "zc root must satisfy 1 ≤ root < length, got root={root}, length={length}"
        )));
    }
    if gcd(root, length) != 1 {
        return Err(Error::Config(format!(
            "zc root {root} is not coprime with length {length}"
        )));
    }
    let n_f = length as f64;
    let samples = (0..length)
        .map(|n| {
            let phase = -std::f64::consts::PI * (root as f64) * (n as f64) * (n as f64 + 1.0) / n_f;
            Complex64::new(phase.cos(), phase.sin())
        })
        .collect();
    Ok(ZcSequence { root, length, samples })
}

/// Generator configuration. Defaults mirror the reference measurement setup:
/// SNR 10 dB, Ncs 13, 1000 preamble sequences, 8% genuine-peak share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_records: usize,
    pub peak_fraction: f64,
    pub snr_db: f64,
    /// Noise-floor drift range in dB. The receiver's floor wanders over the
    /// record stream as a slow reflected random walk in [0, snr_spread_db]
    /// dB above nominal, modeling shadowing and interference drift; nearby
    /// records share their local floor, which is what makes dataset-ordered
    /// delay embeddings informative.
    pub snr_spread_db: f64,
    pub ncs: usize,
    pub n_sequences: usize,
    pub seed: u64,
    pub zc_length: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_records: 10_000,
            peak_fraction: 0.08,
            snr_db: 10.0,
            snr_spread_db: 6.0,
            ncs: 13,
            n_sequences: 1000,
            seed: 0,
            zc_length: 139,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_records == 0 {
            return Err(Error::Config("n_records must be positive".into()));
        }
        if !(self.peak_fraction > 0.0 && self.peak_fraction < 1.0) {
            return Err(Error::Config(format!(
                "peak_fraction must be in (0,1), got {}",
                self.peak_fraction
            )));
        }
        if !self.snr_db.is_finite() || !self.snr_spread_db.is_finite() || self.snr_spread_db < 0.0 {
            return Err(Error::Config("snr_db must be finite and spread nonnegative".into()));
        }
        if self.zc_length < 3 || self.zc_length.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "zc_length must be odd and ≥ 3, got {}",
                self.zc_length
            )));
        }
        if self.ncs == 0 || self.ncs > self.zc_length {
            return Err(Error::Config(format!(
                "ncs must be in [1, zc_length], got {}",
                self.ncs
            )));
        }
        if self.n_sequences == 0 {
            return Err(Error::Config("n_sequences must be positive".into()));
        }
        Ok(())
    }

    /// Roots valid for this length, in ascending order.
    fn valid_roots(&self) -> Vec<usize> {
        (1..self.zc_length).filter(|&u| gcd(u, self.zc_length) == 1).collect()
    }
}

/// Maps a preamble index to its (root, cyclic shift) the way preamble tables
/// are built: each root contributes floor(N/Ncs) shifts before the next root
/// is consumed.
fn preamble_params(cfg: &GenConfig, roots: &[usize], preamble: usize) -> (usize, usize) {
    let shifts_per_root = (cfg.zc_length / cfg.ncs).max(1);
    let root = roots[(preamble / shifts_per_root) % roots.len()];
    let shift = (preamble % shifts_per_root) * cfg.ncs;
    (root, shift)
}

/// Simulates one detection candidate and extracts its features.
///
/// A Peak candidate embeds a genuine preamble delayed by a uniform draw in
/// [0, Ncs) on top of AWGN; a FalsePeak candidate is noise only. The noise
/// floor sits `floor_db` dB above the nominal snr_db floor. The label echoes
/// the simulation's ground truth, never the threshold test.
///
/// Standalone candidates draw an independent floor from [0, snr_spread_db);
/// `generate_dataset` supplies the drifting floor instead.
pub fn simulate_candidate(cfg: &GenConfig, is_peak: bool, rng: &mut ChaCha12Rng) -> Result<FeatureRecord> {
    cfg.validate()?;
    let roots = cfg.valid_roots();
    let floor_db: f64 =
        if cfg.snr_spread_db > 0.0 { rng.random_range(0.0..cfg.snr_spread_db) } else { 0.0 };
    simulate_candidate_inner(cfg, &roots, is_peak, floor_db, rng)
}

fn simulate_candidate_inner(
    cfg: &GenConfig,
    roots: &[usize],
    is_peak: bool,
    floor_db: f64,
    rng: &mut ChaCha12Rng,
) -> Result<FeatureRecord> {
    let n = cfg.zc_length;
    let preamble = rng.random_range(0..cfg.n_sequences);
    let delay = rng.random_range(0..cfg.ncs);
    let (root, base_shift) = preamble_params(cfg, roots, preamble);
    let replica = generate_zc(root, n)?;

    // Unit signal power per sample; the noise floor is the nominal SNR
    // raised by the local drift.
    let noise_var = 10f64.powf((floor_db - cfg.snr_db) / 10.0);
    let noise_scale = (noise_var / 2.0).sqrt();
    let mut received: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * noise_scale, im * noise_scale)
        })
        .collect();
    if is_peak {
        let total_shift = (base_shift + delay) % n;
        for (i, r) in received.iter_mut().enumerate() {
            // received[i] += z[(i − total_shift) mod N]
            let src = (i + n - total_shift) % n;
            *r += replica.samples[src];
        }
    }

    // Circular correlation magnitude, normalized by sequence length:
    // m[τ] = |Σ_n r[n]·conj(z[(n−τ) mod N])| / N.
    let mut mags = vec![0.0f64; n];
    for (tau, mag) in mags.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, r) in received.iter().enumerate() {
            let src = (i + n - tau) % n;
            acc += r * replica.samples[src].conj();
        }
        *mag = acc.norm() / n as f64;
    }

    let mut peak_idx = 0usize;
    for (i, &m) in mags.iter().enumerate() {
        if m > mags[peak_idx] {
            peak_idx = i;
        }
    }
    let amplitude = mags[peak_idx];

    // Correlation floor: everything outside the peak ±1 guard (cyclic).
    let before = (peak_idx + n - 1) % n;
    let after = (peak_idx + 1) % n;
    let mut count = 0.0f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (i, &m) in mags.iter().enumerate() {
        if i == peak_idx || i == before || i == after {
            continue;
        }
        count += 1.0;
        sum += m;
        sum_sq += m * m;
    }
    let mean_floor = sum / count;
    let mean_floor_power = sum_sq / count;
    let variance = (mean_floor_power - mean_floor * mean_floor).max(0.0);
    let threshold = C_THR * variance.sqrt();
    let snr = 10.0 * (amplitude * amplitude / mean_floor_power.max(1e-300)).log10();

    let record = FeatureRecord {
        amplitude,
        variance,
        threshold,
        snr,
        label: if is_peak { Label::Peak } else { Label::FalsePeak },
    };
    if !record.is_finite() {
        return Err(Error::Numeric("non-finite candidate feature".into()));
    }
    Ok(record)
}

/// Noise-floor drift in dB over the record stream: a reflected Gaussian
/// random walk on [0, range], step range/16 per record. Nearby records share
/// their local floor (correlation length ~ a few hundred records); the walk
/// covers the whole range over a long stream.
fn floor_drift(n: usize, range: f64, seed_value: u64) -> Vec<f64> {
    if range <= 0.0 {
        return vec![0.0; n];
    }
    let mut rng = seed::rng(seed_value);
    let step = range / 16.0;
    let mut level: f64 = rng.random_range(0.0..range);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(level);
        let eps: f64 = StandardNormal.sample(&mut rng);
        level += step * eps;
        // Reflect into [0, range]; one fold suffices for |step·eps| < range.
        if level < 0.0 {
            level = -level;
        }
        if level > range {
            level = 2.0 * range - level;
        }
        level = level.clamp(0.0, range);
    }
    out
}

/// Generates the full synthetic dataset: exactly round(n_records ×
/// peak_fraction) Peak labels at seed-determined positions, a drifting noise
/// floor across the stream, per-record simulation in parallel (one derived
/// RNG stream per record), then per-feature mean normalization over the
/// whole set.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_records;
    let n_peak = (n as f64 * cfg.peak_fraction).round() as usize;

    // Seed-determined Peak positions via a Fisher-Yates shuffle.
    let mut order: Vec<usize> = (0..n).collect();
    let mut label_rng = seed::rng(seed::derive(cfg.seed, &["labels"]));
    for i in (1..n).rev() {
        let j = label_rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut is_peak = vec![false; n];
    for &idx in order.iter().take(n_peak) {
        is_peak[idx] = true;
    }

    let drift = floor_drift(n, cfg.snr_spread_db, seed::derive(cfg.seed, &["drift"]));
    let roots = cfg.valid_roots();
    let mut records: Vec<FeatureRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(cfg.seed, &["rec", &i.to_string()]));
            simulate_candidate_inner(cfg, &roots, is_peak[i], drift[i], &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    mean_normalize(&mut records);
    Ok(Dataset::new(
        records,
        Provenance { generator: Some(cfg.clone()), noise: None, normalized: true },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zc_direct_evaluation_length_3() {
        // Hand evaluation of x_1[n] = exp(−jπ·n(n+1)/3) at n = 0, 1, 2.
        let zc = generate_zc(1, 3).unwrap();
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0),
            Complex64::new(1.0, 0.0),
        ];
        for (got, want) in zc.samples.iter().zip(expected) {
            assert_relative_eq!(got.re, want.re, epsilon = 1e-12);
            assert_relative_eq!(got.im, want.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn zc_unit_magnitude() {
        for (root, length) in [(1usize, 3usize), (2, 7), (25, 139), (138, 139), (5, 839)] {
            let zc = generate_zc(root, length).unwrap();
            for s in &zc.samples {
                assert_relative_eq!(s.norm(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zc_rejects_invalid() {
        assert!(generate_zc(2, 4).is_err(), "even length");
        assert!(generate_zc(0, 5).is_err(), "zero root");
        assert!(generate_zc(5, 5).is_err(), "root = length");
        assert!(generate_zc(3, 9).is_err(), "shared factor");
        assert!(generate_zc(1, 1).is_err(), "too short");
    }

    #[test]
    fn candidate_label_echoes_ground_truth() {
        let cfg = GenConfig { n_records: 10, ..GenConfig::default() };
        let mut rng = seed::rng(1);
        let rec = simulate_candidate(&cfg, true, &mut rng).unwrap();
        assert_eq!(rec.label, Label::Peak);
        let rec = simulate_candidate(&cfg, false, &mut rng).unwrap();
        assert_eq!(rec.label, Label::FalsePeak);
    }

    #[test]
    fn candidate_amplitudes_separate_in_expectation() {
        // Monte-Carlo over the generator: mean Peak amplitude strictly above
        // mean FalsePeak amplitude over ≥ 1000 draws per class.
        let cfg = GenConfig::default();
        let roots = cfg.valid_roots();
        let mut peak_sum = 0.0;
        let mut false_sum = 0.0;
        let draws = 1000;
        for i in 0..draws {
            let floor = (i % 7) as f64;
            let mut rng = seed::rng(seed::derive(99, &["mc", &i.to_string()]));
            peak_sum +=
                simulate_candidate_inner(&cfg, &roots, true, floor, &mut rng).unwrap().amplitude;
            let mut rng = seed::rng(seed::derive(99, &["mcf", &i.to_string()]));
            false_sum +=
                simulate_candidate_inner(&cfg, &roots, false, floor, &mut rng).unwrap().amplitude;
        }
        let peak_mean = peak_sum / draws as f64;
        let false_mean = false_sum / draws as f64;
        assert!(
            peak_mean > false_mean,
            "peak mean {peak_mean} should exceed false-peak mean {false_mean}"
        );
    }

    #[test]
    fn default_config_matches_reference_parameters() {
        let cfg = GenConfig::default();
        assert_eq!(cfg.snr_db, 10.0);
        assert_eq!(cfg.ncs, 13);
        assert_eq!(cfg.n_sequences, 1000);
        assert_eq!(cfg.peak_fraction, 0.08);
    }

    #[test]
    fn floor_drift_stays_in_range_and_moves_slowly() {
        let range = 6.0;
        let drift = floor_drift(5000, range, 42);
        assert_eq!(drift.len(), 5000);
        let mut step_sum = 0.0;
        for w in drift.windows(2) {
            assert!((0.0..=range).contains(&w[0]));
            step_sum += (w[1] - w[0]).abs();
        }
        // Mean |step| ≈ range/16 · E|N(0,1)| ≈ 0.3, far below the range:
        // neighbors share their floor while the walk still covers the band.
        let mean_step = step_sum / 4999.0;
        assert!(mean_step < range / 10.0, "mean step {mean_step}");
        let lo = drift.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = drift.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo > range / 2.0, "walk too static: [{lo}, {hi}]");
    }

    #[test]
    fn zero_spread_pins_the_floor() {
        assert_eq!(floor_drift(10, 0.0, 7), vec![0.0; 10]);
    }

    #[test]
    fn dataset_class_counts_exact() {
        let cfg = GenConfig { n_records: 1000, seed: 5, ..GenConfig::default() };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.count(Label::Peak), 80);
        assert_eq!(ds.count(Label::FalsePeak), 920);
    }

    #[test]
    fn dataset_deterministic() {
        let cfg = GenConfig { n_records: 300, seed: 11, ..GenConfig::default() };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_normalized_zero_mean() {
        let cfg = GenConfig { n_records: 500, seed: 3, ..GenConfig::default() };
        let ds = generate_dataset(&cfg).unwrap();
        for j in 0..crate::data::N_FEATURES {
            let mean: f64 =
                ds.records.iter().map(|r| r.features()[j]).sum::<f64>() / ds.len() as f64;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
        }
    }

    #[test]
    fn amplitude_threshold_separates_clean_data() {
        // Exhaustive scalar-threshold search on the amplitude column must
        // reach F1 ≥ 0.99 on clean generated data.
        let cfg = GenConfig { n_records: 2000, seed: 17, ..GenConfig::default() };
        let ds = generate_dataset(&cfg).unwrap();
        let mut amps: Vec<(f64, Label)> =
            ds.records.iter().map(|r| (r.amplitude, r.label)).collect();
        amps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_peaks = ds.count(Label::Peak);
        let mut best = 0.0f64;
        // Threshold between consecutive sorted amplitudes; predict Peak above.
        let mut peaks_below = 0usize;
        for i in 0..amps.len() {
            let preds_above = amps.len() - i;
            let tp = total_peaks - peaks_below;
            let fp = preds_above - tp;
            let fn_ = peaks_below;
            let denom = 2 * tp + fp + fn_;
            if denom > 0 {
                best = best.max(2.0 * tp as f64 / denom as f64);
            }
            if amps[i].1 == Label::Peak {
                peaks_below += 1;
            }
        }
        assert!(best >= 0.99, "best amplitude-threshold F1 {best}");
    }
}
