//! Pluggable classifier set: decision tree, k-nearest neighbor, extreme
//! learning machine, Gaussian naive Bayes. All expose fit / predict /
//! posterior with the fixed class order [FalsePeak, Peak].

mod elm;
mod knn;
mod nb;
mod tree;

pub(crate) use elm::{solve_linear, ElmBasis};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{FeatureMatrix, Label};
use crate::error::{Error, Result};

/// ELM hidden-layer activation. Only the logistic sigmoid is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    Sigmoid,
}

/// Classifier kind plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    DecisionTree {
        /// None means unbounded depth.
        max_depth: Option<usize>,
        min_leaf: usize,
    },
    Knn {
        k: usize,
    },
    Elm {
        hidden_units: usize,
        ridge_lambda: f64,
        activation: Activation,
        weight_seed: u64,
    },
    GaussianNb {
        variance_floor: f64,
    },
}

impl ClassifierSpec {
    pub fn tree(max_depth: Option<usize>) -> Self {
        ClassifierSpec::DecisionTree { max_depth, min_leaf: 1 }
    }

    pub fn knn(k: usize) -> Self {
        ClassifierSpec::Knn { k }
    }

    pub fn elm(hidden_units: usize, ridge_lambda: f64, weight_seed: u64) -> Self {
        ClassifierSpec::Elm {
            hidden_units,
            ridge_lambda,
            activation: Activation::Sigmoid,
            weight_seed,
        }
    }

    pub fn gaussian_nb() -> Self {
        ClassifierSpec::GaussianNb { variance_floor: 1e-9 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierSpec::DecisionTree { .. } => "tree",
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::Elm { .. } => "elm",
            ClassifierSpec::GaussianNb { .. } => "nb",
        }
    }

    /// Same spec with a different ELM weight seed; other kinds are returned
    /// unchanged (they have no internal randomness).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ClassifierSpec::Elm { hidden_units, ridge_lambda, activation, .. } => {
                ClassifierSpec::Elm {
                    hidden_units: *hidden_units,
                    ridge_lambda: *ridge_lambda,
                    activation: *activation,
                    weight_seed: seed,
                }
            }
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierSpec::DecisionTree { max_depth, min_leaf } => {
                if *min_leaf == 0 {
                    return Err(Error::Config("min_leaf must be ≥ 1".into()));
                }
                if let Some(0) = max_depth {
                    return Err(Error::Config("max_depth must be ≥ 1 when bounded".into()));
                }
            }
            ClassifierSpec::Knn { k } => {
                if *k == 0 {
                    return Err(Error::Config("k must be ≥ 1".into()));
                }
            }
            ClassifierSpec::Elm { hidden_units, ridge_lambda, .. } => {
                if *hidden_units == 0 {
                    return Err(Error::Config("hidden_units must be ≥ 1".into()));
                }
                if !ridge_lambda.is_finite() || *ridge_lambda < 0.0 {
                    return Err(Error::Config(format!(
                        "ridge_lambda must be finite and ≥ 0, got {ridge_lambda}"
                    )));
                }
            }
            ClassifierSpec::GaussianNb { variance_floor } => {
                if !variance_floor.is_finite() || *variance_floor <= 0.0 {
                    return Err(Error::Config(format!(
                        "variance_floor must be finite and > 0, got {variance_floor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ModelState {
    Tree(tree::TreeState),
    Knn(knn::KnnState),
    Elm(elm::ElmState),
    Nb(nb::NbState),
}

/// A fitted classifier. Immutable; safe to share across threads for
/// concurrent predict/posterior calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    input_dim: usize,
    state: ModelState,
}

fn check_dims(x: &FeatureMatrix, expected: usize) -> Result<()> {
    if x.cols != expected {
        return Err(Error::Data(format!(
            "dimension mismatch: model expects {expected} columns, matrix has {}",
            x.cols
        )));
    }
    Ok(())
}

/// Fits `spec` on the rows of `x` with the given labels. The matrix's own
/// label column is ignored so callers can train on pseudo-labels.
pub fn fit(spec: &ClassifierSpec, x: &FeatureMatrix, y: &[Label]) -> Result<TrainedModel> {
    spec.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: {} rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() < 2 {
        return Err(Error::Data(format!("need at least 2 training rows, got {}", x.rows())));
    }
    let n_peak = y.iter().filter(|l| **l == Label::Peak).count();
    let single_class = n_peak == 0 || n_peak == y.len();
    if single_class && !matches!(spec, ClassifierSpec::Knn { .. }) {
        return Err(Error::Data(format!(
            "degenerate training set: only one class present ({} of {} rows are peaks)",
            n_peak,
            y.len()
        )));
    }

    let state = match spec {
        ClassifierSpec::DecisionTree { max_depth, min_leaf } => {
            ModelState::Tree(tree::fit(x, y, *max_depth, *min_leaf))
        }
        ClassifierSpec::Knn { k } => ModelState::Knn(knn::fit(x, y, *k)),
        ClassifierSpec::Elm { hidden_units, ridge_lambda, weight_seed, .. } => {
            ModelState::Elm(elm::fit(x, y, *hidden_units, *ridge_lambda, *weight_seed)?)
        }
        ClassifierSpec::GaussianNb { variance_floor } => {
            ModelState::Nb(nb::fit(x, y, *variance_floor))
        }
    };
    Ok(TrainedModel { spec: spec.clone(), input_dim: x.cols, state })
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Class posteriors, one `[p_false_peak, p_peak]` row per input row.
    /// Rows are nonnegative and sum to 1.
    pub fn posterior(&self, x: &FeatureMatrix) -> Result<Vec<[f64; 2]>> {
        check_dims(x, self.input_dim)?;
        Ok((0..x.rows()).map(|i| self.posterior_row(x.row(i))).collect())
    }

    /// Posterior of a single feature row (length must equal `input_dim`;
    /// checked by the callers that accept external matrices).
    pub fn posterior_row(&self, row: &[f64]) -> [f64; 2] {
        match &self.state {
            ModelState::Tree(s) => s.posterior(row),
            ModelState::Knn(s) => s.posterior(row),
            ModelState::Elm(s) => s.posterior(row),
            ModelState::Nb(s) => s.posterior(row),
        }
    }

    /// Argmax of the posterior; ties go to FalsePeak (the majority class).
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<Label>> {
        Ok(self.posterior(x)?.iter().map(label_from_posterior).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Data(format!("serializing model: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("parsing model {}: {e}", path.display())))
    }

    #[cfg(test)]
    fn elm_state(&self) -> Option<&elm::ElmState> {
        match &self.state {
            ModelState::Elm(s) => Some(s),
            _ => None,
        }
    }
}

pub fn label_from_posterior(p: &[f64; 2]) -> Label {
    if p[1] > p[0] {
        Label::Peak
    } else {
        Label::FalsePeak
    }
}

/// Hyperparameter grids used when tuning. Fixed and small so runs stay
/// reproducible; the experiment metadata echoes whichever spec was chosen.
pub fn default_grid(kind: &str, elm_seed: u64) -> Result<Vec<ClassifierSpec>> {
    match kind {
        "tree" => Ok([Some(3), Some(5), Some(10), None]
            .iter()
            .map(|d| ClassifierSpec::tree(*d))
            .collect()),
        "knn" => Ok([1, 3, 5, 11].iter().map(|k| ClassifierSpec::knn(*k)).collect()),
        "elm" => {
            let mut grid = Vec::new();
            for hidden in [32, 128, 512] {
                for lambda in [1e-5, 1e-3, 1e-1] {
                    grid.push(ClassifierSpec::elm(hidden, lambda, elm_seed));
                }
            }
            Ok(grid)
        }
        "nb" => Ok(vec![ClassifierSpec::gaussian_nb()]),
        other => Err(Error::Config(format!("unknown classifier kind {other:?}"))),
    }
}

/// Stratified fold ids: the i-th row of each class goes to fold i % folds.
fn fold_assignment(y: &[Label], folds: usize) -> Vec<usize> {
    let mut counters = [0usize; 2];
    y.iter()
        .map(|l| {
            let c = l.index();
            let f = counters[c] % folds;
            counters[c] += 1;
            f
        })
        .collect()
}

/// Picks the grid point with the best mean cross-validated F1 (positive
/// class Peak). Ties keep the earlier grid entry. Grid points that fail to
/// fit on any fold are skipped; erroring only if every point fails.
pub fn tune(
    grid: &[ClassifierSpec],
    x: &FeatureMatrix,
    y: &[Label],
    folds: usize,
) -> Result<ClassifierSpec> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if folds < 2 {
        return Err(Error::Config(format!("tuning needs ≥ 2 folds, got {folds}")));
    }
    if x.rows() != y.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: {} rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    let assignment = fold_assignment(y, folds);
    let mut best: Option<(f64, &ClassifierSpec)> = None;
    let mut last_err = None;
    for spec in grid {
        let mut scores = Vec::with_capacity(folds);
        let mut failed = false;
        for f in 0..folds {
            let train_idx: Vec<usize> =
                (0..y.len()).filter(|i| assignment[*i] != f).collect();
            let val_idx: Vec<usize> = (0..y.len()).filter(|i| assignment[*i] == f).collect();
            if train_idx.is_empty() || val_idx.is_empty() {
                failed = true;
                break;
            }
            let x_train = x.subset(&train_idx);
            let y_train: Vec<Label> = train_idx.iter().map(|&i| y[i]).collect();
            let x_val = x.subset(&val_idx);
            let y_val: Vec<Label> = val_idx.iter().map(|&i| y[i]).collect();
            match fit(spec, &x_train, &y_train) {
                Ok(model) => {
                    let pred = model.predict(&x_val)?;
                    scores.push(crate::eval::f1_score(&y_val, &pred));
                }
                Err(e) => {
                    last_err = Some(e);
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, spec));
        }
    }
    match best {
        Some((_, spec)) => Ok(spec.clone()),
        None => Err(last_err.unwrap_or_else(|| {
            Error::Data("every grid point failed to fit".into())
        })),
    }
}
