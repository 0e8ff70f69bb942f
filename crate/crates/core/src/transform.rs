//! Feature-space transforms: phase-space reconstruction (delay embedding)
//! and principal component analysis on the four raw detection features.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{Dataset, FeatureMatrix, SpaceTag, N_FEATURES};
use crate::error::{Error, Result};

/// Delay-embedding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsrConfig {
    /// Embedding dimension m.
    pub embed_dim: usize,
    /// Time lag τ.
    pub time_lag: usize,
}

impl Default for PsrConfig {
    fn default() -> Self {
        PsrConfig { embed_dim: 7, time_lag: 1 }
    }
}

impl PsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.time_lag == 0 {
            return Err(Error::Config(format!(
                "embed_dim and time_lag must be positive, got m={} τ={}",
                self.embed_dim, self.time_lag
            )));
        }
        Ok(())
    }
}

/// Trajectory matrix of a single series: row i is
/// [series[i], series[i+τ], …, series[i+(m−1)τ]], no padding.
pub fn psr_embed(series: &[f64], cfg: &PsrConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let (m, tau) = (cfg.embed_dim, cfg.time_lag);
    let span = (m - 1) * tau;
    if series.len() < span + 1 {
        return Err(Error::Data(format!(
            "series of length {} is too short for m={m}, τ={tau} (needs ≥ {})",
            series.len(),
            span + 1
        )));
    }
    let rows = series.len() - span;
    Ok((0..rows)
        .map(|i| (0..m).map(|j| series[i + j * tau]).collect())
        .collect())
}

/// Per-record delay embedding of each feature column over the dataset
/// ordering, edge-padded (last value repeated) so every record keeps a row.
/// Output is N × 4m with labels passed through.
pub fn psr_features(dataset: &Dataset, cfg: &PsrConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("psr_features on an empty dataset".into()));
    }
    let (m, tau) = (cfg.embed_dim, cfg.time_lag);
    let n = dataset.len();
    let cols = N_FEATURES * m;
    let mut values = Vec::with_capacity(n * cols);
    let columns: Vec<Vec<f64>> = (0..N_FEATURES)
        .map(|c| dataset.records.iter().map(|r| r.features()[c]).collect())
        .collect();
    for i in 0..n {
        for col in &columns {
            for j in 0..m {
                values.push(col[(i + j * tau).min(n - 1)]);
            }
        }
    }
    FeatureMatrix::new(cols, values, dataset.labels(), SpaceTag::Psr)
}

/// Principal components of a feature matrix: mean, top-k eigenvectors of the
/// sample covariance (rows of `components`), and their eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("serializing PCA model: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PcaModel> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("parsing PCA model {}: {e}", path.display())))
    }
}

/// Jacobi eigendecomposition of a symmetric matrix (flat row-major d×d).
/// Returns (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_symmetric(mut a: Vec<f64>, d: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale = (0..d * d).map(|i| a[i].abs()).fold(1.0f64, f64::max);
    let threshold = tol * scale;
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(a[p * d + q].abs());
            }
        }
        if off <= threshold {
            let eig = (0..d).map(|i| a[i * d + i]).collect();
            return Ok((eig, v));
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() <= threshold {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (a[p * d + p], a[q * d + q]);
                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    if k != p && k != q {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[p * d + k] = a[k * d + p];
                        a[k * d + q] = s * akp + c * akq;
                        a[q * d + k] = a[k * d + q];
                    }
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numeric("Jacobi eigensolver did not converge".into()))
}

const JACOBI_TOL: f64 = 1e-10;

/// Fits PCA on the matrix values (labels are never read): column means, then
/// the top-k eigenvectors of the sample covariance, eigenvalues descending.
/// Sign convention: each component's largest-magnitude entry is positive;
/// equal eigenvalues keep their original axis order.
pub fn pca_fit(matrix: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (matrix.rows(), matrix.cols);
    if k == 0 || k > d {
        return Err(Error::Config(format!(
            "component count k={k} must be in 1..={d}"
        )));
    }
    if n < 2 {
        return Err(Error::Data(format!("PCA needs at least 2 rows, got {n}")));
    }

    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(matrix.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = vec![0.0f64; d * d];
    for i in 0..n {
        let row = matrix.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] /= denom;
            cov[b * d + a] = cov[a * d + b];
        }
    }

    let (eig, vecs) = jacobi_symmetric(cov, d, JACOBI_TOL)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig[b].partial_cmp(&eig[a]).unwrap());
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = eig[idx];
        if lambda < -1e-10 {
            return Err(Error::Numeric(format!(
                "covariance produced a negative eigenvalue {lambda}"
            )));
        }
        eigenvalues.push(lambda.max(0.0));
        let mut comp: Vec<f64> = (0..d).map(|r| vecs[r * d + idx]).collect();
        let dominant = comp
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .unwrap()
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .unwrap();
        if comp[dominant] < 0.0 {
            for c in &mut comp {
                *c = -*c;
            }
        }
        components.push(comp);
    }

    Ok(PcaModel { mean, components, eigenvalues })
}

/// Maps each row x to components·(x − mean); labels pass through.
pub fn pca_project(model: &PcaModel, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let d = model.input_dim();
    if matrix.cols != d {
        return Err(Error::Data(format!(
            "PCA model expects {d} columns, matrix has {}",
            matrix.cols
        )));
    }
    let k = model.output_dim();
    let mut values = Vec::with_capacity(matrix.rows() * k);
    for i in 0..matrix.rows() {
        let row = matrix.row(i);
        for comp in &model.components {
            let mut acc = 0.0;
            for j in 0..d {
                acc += comp[j] * (row[j] - model.mean[j]);
            }
            values.push(acc);
        }
    }
    FeatureMatrix::new(k, values, matrix.labels.clone(), SpaceTag::Pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureRecord, Label, Provenance};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dataset_from_rows(rows: &[[f64; 4]]) -> Dataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, r)| FeatureRecord {
                amplitude: r[0],
                variance: r[1],
                threshold: r[2],
                snr: r[3],
                label: if i % 2 == 0 { Label::Peak } else { Label::FalsePeak },
            })
            .collect();
        Dataset::new(records, Provenance::default())
    }

    fn matrix_from_rows(rows: &[Vec<f64>]) -> FeatureMatrix {
        let cols = rows[0].len();
        let values = rows.iter().flatten().copied().collect();
        let labels = vec![Label::FalsePeak; rows.len()];
        FeatureMatrix::new(cols, values, labels, SpaceTag::Raw).unwrap()
    }

    #[test]
    fn embed_hand_example() {
        let cfg = PsrConfig { embed_dim: 3, time_lag: 1 };
        let rows = psr_embed(&[1.0, 2.0, 3.0, 4.0, 5.0], &cfg).unwrap();
        assert_eq!(
            rows,
            vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]
        );
    }

    #[test]
    fn embed_m1_is_identity_column() {
        let cfg = PsrConfig { embed_dim: 1, time_lag: 1 };
        let series = [4.0, 7.0, -2.0];
        let rows = psr_embed(&series, &cfg).unwrap();
        assert_eq!(rows, vec![vec![4.0], vec![7.0], vec![-2.0]]);
    }

    #[test]
    fn embed_boundary_single_row() {
        let cfg = PsrConfig::default();
        let series: Vec<f64> = (0..7).map(f64::from).collect();
        let rows = psr_embed(&series, &cfg).unwrap();
        assert_eq!(rows, vec![series]);
    }

    #[test]
    fn embed_rejects_short_series() {
        let cfg = PsrConfig::default();
        assert!(psr_embed(&[1.0; 6], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn embed_rows_are_copies(series in proptest::collection::vec(-1e6..1e6f64, 1..60),
                                 m in 1usize..6, tau in 1usize..4) {
            let cfg = PsrConfig { embed_dim: m, time_lag: tau };
            let span = (m - 1) * tau;
            prop_assume!(series.len() > span);
            let rows = psr_embed(&series, &cfg).unwrap();
            prop_assert_eq!(rows.len(), series.len() - span);
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    prop_assert_eq!(v.to_bits(), series[i + j * tau].to_bits());
                }
            }
        }
    }

    #[test]
    fn features_shape_and_edge_padding() {
        let rows: Vec<[f64; 4]> = (0..100)
            .map(|i| [i as f64, 2.0 * i as f64, -(i as f64), 0.5 * i as f64])
            .collect();
        let ds = dataset_from_rows(&rows);
        let out = psr_features(&ds, &PsrConfig::default()).unwrap();
        assert_eq!(out.rows(), 100);
        assert_eq!(out.cols, 28);
        assert_eq!(out.space_tag, SpaceTag::Psr);
        // Interior row: plain copies.
        let r10 = out.row(10);
        for c in 0..4 {
            for j in 0..7 {
                assert_eq!(r10[c * 7 + j], rows[10 + j][c]);
            }
        }
        // Last row: every coordinate padded to the final value.
        let last = out.row(99);
        for c in 0..4 {
            for j in 0..7 {
                assert_eq!(last[c * 7 + j], rows[99][c]);
            }
        }
        // Row 95 mixes real lags (up to index 99) and padding.
        let r95 = out.row(95);
        for c in 0..4 {
            for j in 0..7 {
                assert_eq!(r95[c * 7 + j], rows[(95 + j).min(99)][c]);
            }
        }
    }

    #[test]
    fn features_m1_equals_raw() {
        let rows: Vec<[f64; 4]> = (0..10).map(|i| [i as f64, 1.0, 2.0, 3.0]).collect();
        let ds = dataset_from_rows(&rows);
        let out = psr_features(&ds, &PsrConfig { embed_dim: 1, time_lag: 1 }).unwrap();
        let raw = ds.to_matrix();
        assert_eq!(out.values, raw.values);
        assert_eq!(out.labels, raw.labels);
    }

    #[test]
    fn features_constant_column_stays_constant() {
        let rows: Vec<[f64; 4]> = (0..20).map(|i| [7.5, i as f64, 0.0, 1.0]).collect();
        let ds = dataset_from_rows(&rows);
        let out = psr_features(&ds, &PsrConfig::default()).unwrap();
        for i in 0..20 {
            for j in 0..7 {
                assert_eq!(out.row(i)[j], 7.5);
            }
        }
    }

    #[test]
    fn pca_collinear_points() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, i as f64]).collect();
        let m = matrix_from_rows(&pts);
        let model = pca_fit(&m, 2).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(model.components[0][0], inv_sqrt2, epsilon = 1e-8);
        assert_abs_diff_eq!(model.components[0][1], inv_sqrt2, epsilon = 1e-8);
        assert_abs_diff_eq!(model.eigenvalues[1], 0.0, epsilon = 1e-8);
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| rng.random_range(-2.0..2.0) * (j + 1) as f64)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn pca_full_rank_preserves_distances() {
        let rows = random_rows(40, 4, 11);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 4).unwrap();
        let proj = pca_project(&model, &m).unwrap();
        for i in 0..m.rows() {
            for j in (i + 1)..m.rows() {
                let d_in: f64 = (0..4)
                    .map(|c| (m.row(i)[c] - m.row(j)[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let d_out: f64 = (0..4)
                    .map(|c| (proj.row(i)[c] - proj.row(j)[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert_abs_diff_eq!(d_in, d_out, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pca_trace_identity() {
        // Sum of all eigenvalues must equal total variance, computed here
        // with an independent covariance-diagonal pass.
        let rows = random_rows(60, 4, 23);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 4).unwrap();
        let n = rows.len() as f64;
        let mut total = 0.0;
        for c in 0..4 {
            let mean: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            total += rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        }
        let sum: f64 = model.eigenvalues.iter().sum();
        assert_abs_diff_eq!(sum, total, epsilon = 1e-8);
    }

    #[test]
    fn pca_project_mean_is_zero() {
        let rows = random_rows(30, 4, 5);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 2).unwrap();
        let mean_matrix =
            FeatureMatrix::new(4, model.mean.clone(), vec![Label::Peak], SpaceTag::Raw).unwrap();
        let proj = pca_project(&model, &mean_matrix).unwrap();
        for v in &proj.values {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pca_round_trip_full_rank() {
        let rows = random_rows(25, 4, 7);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 4).unwrap();
        let proj = pca_project(&model, &m).unwrap();
        for i in 0..m.rows() {
            for c in 0..4 {
                let recon: f64 = model.mean[c]
                    + (0..4)
                        .map(|k| model.components[k][c] * proj.row(i)[k])
                        .sum::<f64>();
                assert_abs_diff_eq!(recon, m.row(i)[c], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pca_output_shape_default_k() {
        let rows = random_rows(50, 4, 3);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 2).unwrap();
        let proj = pca_project(&model, &m).unwrap();
        assert_eq!(proj.rows(), 50);
        assert_eq!(proj.cols, 2);
        assert_eq!(proj.space_tag, SpaceTag::Pca);
    }

    #[test]
    fn pca_orthonormal_and_centered() {
        let rows = random_rows(80, 4, 99);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..4)
                    .map(|c| model.components[a][c] * model.components[b][c])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, want, epsilon = 1e-8);
            }
        }
        for w in model.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let proj = pca_project(&model, &m).unwrap();
        for c in 0..4 {
            let mean: f64 =
                (0..proj.rows()).map(|i| proj.row(i)[c]).sum::<f64>() / proj.rows() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn pca_explained_variance_two_ways() {
        let rows = random_rows(70, 4, 41);
        let m = matrix_from_rows(&rows);
        let full = pca_fit(&m, 4).unwrap();
        let total: f64 = full.eigenvalues.iter().sum();
        let model = pca_fit(&m, 2).unwrap();
        let from_eigen = model.eigenvalues.iter().sum::<f64>() / total;

        let proj = pca_project(&model, &m).unwrap();
        let n = proj.rows() as f64;
        let mut captured = 0.0;
        for c in 0..2 {
            let mean: f64 = (0..proj.rows()).map(|i| proj.row(i)[c]).sum::<f64>() / n;
            captured += (0..proj.rows())
                .map(|i| (proj.row(i)[c] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
        }
        assert_abs_diff_eq!(from_eigen, captured / total, epsilon = 1e-7);
    }

    #[test]
    fn pca_sign_convention_flips_negative_dominant() {
        // Spread concentrated on axis 1 with points leaning negative; the
        // dominant entry must still come out positive.
        let pts: Vec<Vec<f64>> =
            (0..10).map(|i| vec![0.01 * i as f64, -(3.0 * i as f64)]).collect();
        let m = matrix_from_rows(&pts);
        let model = pca_fit(&m, 1).unwrap();
        let dominant = if model.components[0][0].abs() > model.components[0][1].abs() {
            model.components[0][0]
        } else {
            model.components[0][1]
        };
        assert!(dominant > 0.0);
    }

    #[test]
    fn pca_equal_eigenvalues_keep_axis_order() {
        let pts = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let m = matrix_from_rows(&pts);
        let model = pca_fit(&m, 2).unwrap();
        assert_eq!(model.eigenvalues[0], model.eigenvalues[1]);
        assert_eq!(model.components[0], vec![1.0, 0.0]);
        assert_eq!(model.components[1], vec![0.0, 1.0]);
    }

    #[test]
    fn pca_rejects_bad_inputs() {
        let rows = random_rows(5, 4, 1);
        let m = matrix_from_rows(&rows);
        assert!(pca_fit(&m, 5).is_err());
        assert!(pca_fit(&m, 0).is_err());
        let one = matrix_from_rows(&rows[..1]);
        assert!(pca_fit(&one, 2).is_err());
        let model = pca_fit(&m, 2).unwrap();
        let wrong = matrix_from_rows(&[vec![1.0, 2.0]]);
        assert!(pca_project(&model, &wrong).is_err());
    }

    #[test]
    fn pca_model_round_trips_through_file() {
        let rows = random_rows(30, 4, 13);
        let m = matrix_from_rows(&rows);
        let model = pca_fit(&m, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pca.json");
        model.save(&path).unwrap();
        let loaded = PcaModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    proptest! {
        #[test]
        fn pca_eigenvalues_descending_and_nonneg(seed in 0u64..500) {
            let rows = random_rows(20, 4, seed);
            let m = matrix_from_rows(&rows);
            let model = pca_fit(&m, 4).unwrap();
            for w in model.eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            for &e in &model.eigenvalues {
                prop_assert!(e >= 0.0);
            }
        }
    }
}
