//! Python bindings over the detection pipeline: dataset generation, noise
//! injection, feature transforms, classifiers, self-training, and the
//! experiment harness. Configs cross the boundary as JSON strings so the
//! Python side can edit them as plain dicts.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::Path;

use prachdet::classifiers::ClassifierSpec;
use prachdet::data::mean_normalize;
use prachdet::eval::{self, j_sweep};
use prachdet::transform::{pca_fit, pca_project, psr_features};
use prachdet::{
    noise, run_experiment, sampling, Dataset, Error, ExperimentConfig, FeatureMatrix, GenConfig,
    Label, NoiseMode, NoiseSpec, PcaModel, PsrConfig, SamplingConfig, SpaceTag, TrainedModel,
};

fn pyerr(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_labels(raw: Vec<String>) -> PyResult<Vec<Label>> {
    raw.iter().map(|s| Label::parse(s).map_err(pyerr)).collect()
}

fn parse_space(s: &str) -> PyResult<SpaceTag> {
    match s {
        "raw" => Ok(SpaceTag::Raw),
        "psr" => Ok(SpaceTag::Psr),
        "pca" => Ok(SpaceTag::Pca),
        other => Err(PyValueError::new_err(format!(
            "unknown feature space {other:?}, expected raw, psr, or pca"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn spec_from(
    kind: &str,
    max_depth: Option<usize>,
    min_leaf: usize,
    k: usize,
    hidden: usize,
    ridge: f64,
    variance_floor: f64,
    seed: u64,
) -> PyResult<ClassifierSpec> {
    let spec = match kind {
        "tree" => {
            let mut s = ClassifierSpec::tree(max_depth);
            if let ClassifierSpec::DecisionTree { min_leaf: ml, .. } = &mut s {
                *ml = min_leaf;
            }
            s
        }
        "knn" => ClassifierSpec::knn(k),
        "elm" => ClassifierSpec::elm(hidden, ridge, seed),
        "nb" => {
            let mut s = ClassifierSpec::gaussian_nb();
            if let ClassifierSpec::GaussianNb { variance_floor: vf } = &mut s {
                *vf = variance_floor;
            }
            s
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown classifier kind {other:?}, expected tree, knn, elm, or nb"
            )))
        }
    };
    spec.validate().map_err(pyerr)?;
    Ok(spec)
}

/// A generated or loaded candidate dataset.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} records, {} peaks)",
            self.inner.len(),
            self.inner.count(Label::Peak)
        )
    }

    /// (peak, false_peak) record counts.
    fn label_counts(&self) -> (usize, usize) {
        (self.inner.count(Label::Peak), self.inner.count(Label::FalsePeak))
    }

    /// Feature row i as (amplitude, variance, threshold, snr).
    fn features(&self, i: usize) -> PyResult<(f64, f64, f64, f64)> {
        let r = self
            .inner
            .records
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("record {i} out of range")))?;
        let f = r.features();
        Ok((f[0], f[1], f[2], f[3]))
    }

    fn label(&self, i: usize) -> PyResult<String> {
        self.inner
            .records
            .get(i)
            .map(|r| r.label.as_str().to_string())
            .ok_or_else(|| PyValueError::new_err(format!("record {i} out of range")))
    }

    fn labels(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.label.as_str().to_string()).collect()
    }

    /// Copy with each feature column mean-normalized to (x - mean) / range.
    fn normalized(&self) -> PyDataset {
        let mut ds = self.inner.clone();
        mean_normalize(&mut ds.records);
        ds.provenance.normalized = true;
        PyDataset { inner: ds }
    }

    /// Untransformed 4-column feature matrix.
    fn matrix(&self) -> PyFeatureMatrix {
        PyFeatureMatrix { inner: self.inner.to_matrix() }
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_with_sidecar(Path::new(path)).map_err(pyerr)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<PyDataset> {
        Ok(PyDataset { inner: Dataset::read_csv_path(Path::new(path)).map_err(pyerr)? })
    }
}

/// Row-aligned feature matrix in raw, psr, or pca space.
#[pyclass(name = "FeatureMatrix")]
struct PyFeatureMatrix {
    inner: FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    fn __len__(&self) -> usize {
        self.inner.rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({}x{}, space={})",
            self.inner.rows(),
            self.inner.cols,
            self.inner.space_tag.as_str()
        )
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols
    }

    #[getter]
    fn space(&self) -> String {
        self.inner.space_tag.as_str().to_string()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.rows() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.as_str().to_string()).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<PyFeatureMatrix> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.inner.rows()) {
            return Err(PyValueError::new_err(format!("row {bad} out of range")));
        }
        Ok(PyFeatureMatrix { inner: self.inner.subset(&indices) })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv_path(Path::new(path)).map_err(pyerr)
    }

    #[staticmethod]
    #[pyo3(signature = (path, space = "raw"))]
    fn read_csv(path: &str, space: &str) -> PyResult<PyFeatureMatrix> {
        let tag = parse_space(space)?;
        Ok(PyFeatureMatrix {
            inner: FeatureMatrix::read_csv_path(Path::new(path), tag).map_err(pyerr)?,
        })
    }
}

/// Fitted PCA projection.
#[pyclass(name = "PcaModel")]
struct PyPcaModel {
    inner: PcaModel,
}

#[pymethods]
impl PyPcaModel {
    fn __repr__(&self) -> String {
        format!("PcaModel({} -> {})", self.inner.input_dim(), self.inner.output_dim())
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    fn apply(&self, m: &PyFeatureMatrix) -> PyResult<PyFeatureMatrix> {
        Ok(PyFeatureMatrix { inner: pca_project(&self.inner, &m.inner).map_err(pyerr)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(pyerr)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyPcaModel> {
        Ok(PyPcaModel { inner: PcaModel::load(Path::new(path)).map_err(pyerr)? })
    }
}

/// A fitted classifier.
#[pyclass(name = "Model")]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    fn __repr__(&self) -> String {
        format!("Model(kind={}, input_dim={})", self.kind(), self.inner.input_dim())
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.spec.kind_name().to_string()
    }

    fn predict(&self, m: &PyFeatureMatrix) -> PyResult<Vec<String>> {
        let pred = self.inner.predict(&m.inner).map_err(pyerr)?;
        Ok(pred.iter().map(|l| l.as_str().to_string()).collect())
    }

    /// Per-row (false_peak, peak) posterior pairs.
    fn posterior(&self, m: &PyFeatureMatrix) -> PyResult<Vec<(f64, f64)>> {
        let post = self.inner.posterior(&m.inner).map_err(pyerr)?;
        Ok(post.iter().map(|p| (p[0], p[1])).collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(pyerr)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        Ok(PyModel { inner: TrainedModel::load(Path::new(path)).map_err(pyerr)? })
    }
}

/// Default generator config as a JSON string.
#[pyfunction]
fn default_gen_config() -> PyResult<String> {
    serde_json::to_string_pretty(&GenConfig::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Default experiment config as a JSON string.
#[pyfunction]
fn default_experiment_config() -> PyResult<String> {
    serde_json::to_string_pretty(&ExperimentConfig::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Generate a synthetic candidate dataset. `config` is a JSON string
/// (see `default_gen_config`); omit it for the defaults.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn generate(config: Option<&str>) -> PyResult<PyDataset> {
    let cfg: GenConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => GenConfig::default(),
    };
    Ok(PyDataset { inner: prachdet::prach::generate_dataset(&cfg).map_err(pyerr)? })
}

/// Corrupt a fraction of the records ("flip" labels or "awgn" features).
#[pyfunction]
#[pyo3(signature = (ds, fraction, mode = "flip", seed = 0))]
fn inject_noise(ds: &PyDataset, fraction: f64, mode: &str, seed: u64) -> PyResult<PyDataset> {
    let spec = NoiseSpec { fraction, mode: NoiseMode::parse(mode).map_err(pyerr)?, seed };
    Ok(PyDataset { inner: noise::inject(&ds.inner, &spec).map_err(pyerr)? })
}

/// Per-class proportional split into (train, test).
#[pyfunction]
#[pyo3(signature = (ds, train_fraction = 0.7, seed = 0))]
fn stratified_split(ds: &PyDataset, train_fraction: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
    let (train, test) = eval::stratified_split(&ds.inner, train_fraction, seed).map_err(pyerr)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Delay-embed each feature column over the dataset ordering.
#[pyfunction]
#[pyo3(signature = (ds, embed_dim = 7, time_lag = 1))]
fn psr(ds: &PyDataset, embed_dim: usize, time_lag: usize) -> PyResult<PyFeatureMatrix> {
    let cfg = PsrConfig { embed_dim, time_lag };
    Ok(PyFeatureMatrix { inner: psr_features(&ds.inner, &cfg).map_err(pyerr)? })
}

/// Fit a PCA projection on a raw-space matrix.
#[pyfunction]
#[pyo3(signature = (m, components = 2))]
fn fit_pca(m: &PyFeatureMatrix, components: usize) -> PyResult<PyPcaModel> {
    Ok(PyPcaModel { inner: pca_fit(&m.inner, components).map_err(pyerr)? })
}

/// Fit a classifier on a labeled matrix. Kind is tree, knn, elm, or nb;
/// keyword arguments that do not apply to the kind are ignored.
#[pyfunction]
#[pyo3(signature = (kind, m, max_depth = None, min_leaf = 1, k = 5, hidden = 128, ridge = 1e-3,
                    variance_floor = 1e-9, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit_classifier(
    kind: &str,
    m: &PyFeatureMatrix,
    max_depth: Option<usize>,
    min_leaf: usize,
    k: usize,
    hidden: usize,
    ridge: f64,
    variance_floor: f64,
    seed: u64,
) -> PyResult<PyModel> {
    let spec = spec_from(kind, max_depth, min_leaf, k, hidden, ridge, variance_floor, seed)?;
    let labels = m.inner.labels.clone();
    Ok(PyModel { inner: prachdet::classifiers::fit(&spec, &m.inner, &labels).map_err(pyerr)? })
}

/// Informative-instance self-training: absorb the unlabeled pool into the
/// seed set J rows per cycle, ranked by density x uncertainty. Returns the
/// final model and the number of cycles run.
#[pyfunction]
#[pyo3(signature = (seed_matrix, pool, kind, j = 20, k_density = 5, max_depth = None,
                    min_leaf = 1, k = 5, hidden = 128, ridge = 1e-3, variance_floor = 1e-9,
                    seed = 0))]
#[allow(clippy::too_many_arguments)]
fn self_train(
    seed_matrix: &PyFeatureMatrix,
    pool: &PyFeatureMatrix,
    kind: &str,
    j: usize,
    k_density: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    k: usize,
    hidden: usize,
    ridge: f64,
    variance_floor: f64,
    seed: u64,
) -> PyResult<(PyModel, usize)> {
    let spec = spec_from(kind, max_depth, min_leaf, k, hidden, ridge, variance_floor, seed)?;
    let cfg = SamplingConfig { j, k_density, ..SamplingConfig::default() };
    let out = sampling::self_train(&seed_matrix.inner, &pool.inner, &spec, &cfg).map_err(pyerr)?;
    Ok((PyModel { inner: out.model }, out.log.len()))
}

/// F1 of the Peak class from parallel label lists.
#[pyfunction]
fn f1_score(y_true: Vec<String>, y_pred: Vec<String>) -> PyResult<f64> {
    eval::f1(&parse_labels(y_true)?, &parse_labels(y_pred)?).map_err(pyerr)
}

/// Fraction of matching labels.
#[pyfunction]
fn accuracy(y_true: Vec<String>, y_pred: Vec<String>) -> PyResult<f64> {
    eval::accuracy(&parse_labels(y_true)?, &parse_labels(y_pred)?).map_err(pyerr)
}

/// Run the full repeated evaluation grid; returns the report as JSON.
/// `config` is a JSON string (see `default_experiment_config`).
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_grid(config: Option<&str>) -> PyResult<String> {
    let cfg: ExperimentConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    let report = run_experiment(&cfg).map_err(pyerr)?;
    report.to_json().map_err(pyerr)
}

/// Self-training F1 as a function of the per-cycle budget J.
/// Returns (j, mean_f1, std_f1) tuples.
#[pyfunction]
#[pyo3(signature = (j_values, config = None, space = "psr", kind = "elm", noise = 0.15))]
fn sweep_j(
    j_values: Vec<usize>,
    config: Option<&str>,
    space: &str,
    kind: &str,
    noise: f64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let cfg: ExperimentConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    let tag = parse_space(space)?;
    let points = j_sweep(&cfg, &j_values, tag, kind, noise).map_err(pyerr)?;
    Ok(points.iter().map(|p| (p.j, p.mean_f1, p.std_f1)).collect())
}

#[pymodule]
fn prachdet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyPcaModel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(default_gen_config, m)?)?;
    m.add_function(wrap_pyfunction!(default_experiment_config, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(psr, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pca, m)?)?;
    m.add_function(wrap_pyfunction!(fit_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(self_train, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_j, m)?)?;
    Ok(())
}
