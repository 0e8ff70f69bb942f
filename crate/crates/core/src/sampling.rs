//! Informative-instance selection and the iterative self-training loop:
//! pool rows are scored by density × uncertainty, the top J move into the
//! train set with frozen pseudo-labels, and the classifier is refit until
//! the pool is exhausted.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::classifiers::{self, label_from_posterior, ClassifierSpec, ElmBasis, TrainedModel};
use crate::data::{FeatureMatrix, Label};
use crate::error::{Error, Result};

/// Distance offset keeping densities finite on duplicate rows.
pub const DENSITY_EPS: f64 = 1e-9;

/// How posterior confidence maps to an uncertainty score. The two variants
/// coincide on binary posteriors (1 − (p_max − p_min) = (1 − p_max)/0.5);
/// the switch exists so the scoring rule is explicit in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UncertaintyKind {
    #[default]
    LeastConfident,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Fraction of the train split used as the initial labeled set.
    pub initial_fraction: f64,
    /// Instances moved per cycle.
    pub j: usize,
    /// Neighbor count for the density score.
    pub k_density: usize,
    pub uncertainty: UncertaintyKind,
    /// Seed for the initial labeled/pool split (used by the harness).
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            initial_fraction: 0.10,
            j: 20,
            k_density: 5,
            uncertainty: UncertaintyKind::LeastConfident,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_fraction > 0.0 && self.initial_fraction < 1.0) {
            return Err(Error::Config(format!(
                "initial_fraction must be in (0,1), got {}",
                self.initial_fraction
            )));
        }
        if self.j == 0 {
            return Err(Error::Config("per-cycle budget J must be ≥ 1".into()));
        }
        if self.k_density == 0 {
            return Err(Error::Config("k_density must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One pool row's scores. Density and uncertainty are min-max normalized
/// over the pool they were scored in; informativeness is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub row_index: usize,
    pub density: f64,
    pub uncertainty: f64,
    pub informativeness: f64,
}

/// 1 / (ε + mean Euclidean distance from `x` to its k nearest pool rows).
/// The pool is taken as-is: a zero-distance duplicate counts as a neighbor.
pub fn knn_density(x: &[f64], pool: &FeatureMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be ≥ 1".into()));
    }
    if pool.rows() < k {
        return Err(Error::Data(format!(
            "density pool has {} rows, needs ≥ {k}",
            pool.rows()
        )));
    }
    if pool.cols != x.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: row has {} values, pool has {} columns",
            x.len(),
            pool.cols
        )));
    }
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for i in 0..pool.rows() {
        let d = sq_dist(x, pool.row(i));
        if best.len() == k && d >= best[k - 1] {
            continue;
        }
        let pos = best.partition_point(|&b| b <= d);
        best.insert(pos, d);
        best.truncate(k);
    }
    let mean = best.iter().map(|d| d.sqrt()).sum::<f64>() / k as f64;
    Ok(1.0 / (DENSITY_EPS + mean))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uncertainty of a binary posterior, rescaled to [0,1].
pub fn uncertainty_from_posterior(p: &[f64; 2], kind: UncertaintyKind) -> f64 {
    let hi = p[0].max(p[1]);
    let score = match kind {
        UncertaintyKind::LeastConfident => (1.0 - hi) / 0.5,
        UncertaintyKind::Margin => 1.0 - (hi - p[0].min(p[1])),
    };
    score.clamp(0.0, 1.0)
}

/// Model uncertainty for one feature row (least-confident form).
pub fn uncertainty(model: &TrainedModel, row: &[f64]) -> f64 {
    uncertainty_from_posterior(&model.posterior_row(row), UncertaintyKind::LeastConfident)
}

fn minmax_normalize(values: &mut [f64]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let span = hi - lo;
    if span < 1e-15 {
        values.iter_mut().for_each(|v| *v = 1.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / span);
    }
}

/// Normalizes raw (row, density, uncertainty) triples over the pool, ranks
/// by the informativeness product descending (ties to the lower row index),
/// and keeps the top `j`.
pub(crate) fn rank_pool(raw: &[(usize, f64, f64)], j: usize) -> Vec<ScoredInstance> {
    let mut densities: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let mut uncertainties: Vec<f64> = raw.iter().map(|r| r.2).collect();
    minmax_normalize(&mut densities);
    minmax_normalize(&mut uncertainties);
    let mut scored: Vec<ScoredInstance> = raw
        .iter()
        .enumerate()
        .map(|(i, (row, _, _))| ScoredInstance {
            row_index: *row,
            density: densities[i],
            uncertainty: uncertainties[i],
            informativeness: densities[i] * uncertainties[i],
        })
        .collect();
    scored.sort_by(|a, b| {
        b.informativeness
            .partial_cmp(&a.informativeness)
            .unwrap()
            .then(a.row_index.cmp(&b.row_index))
    });
    scored.truncate(j);
    scored
}

/// Exact k-nearest-neighbor densities within a shrinking pool. Each row
/// keeps a buffer of its nearest peers; when removals leave fewer than k
/// alive entries the buffer is rebuilt from the remaining rows, so scores
/// always reflect the current pool exactly.
struct DensityEngine {
    k: usize,
    cols: usize,
    buffer_size: usize,
    values: Vec<f64>,
    alive: Vec<bool>,
    n_alive: usize,
    buffers: Vec<Vec<(f64, u32)>>,
}

impl DensityEngine {
    fn new(pool: &FeatureMatrix, k: usize) -> DensityEngine {
        let n = pool.rows();
        let buffer_size = (4 * k).max(64).min(n.saturating_sub(1));
        let mut engine = DensityEngine {
            k,
            cols: pool.cols,
            buffer_size,
            values: pool.values.clone(),
            alive: vec![true; n],
            n_alive: n,
            buffers: vec![Vec::new(); n],
        };
        for i in 0..n {
            engine.refill(i);
        }
        engine
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    fn refill(&mut self, i: usize) {
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(self.buffer_size + 1);
        for j in 0..self.alive.len() {
            if j == i || !self.alive[j] {
                continue;
            }
            let d = sq_dist(self.row(i), self.row(j));
            if best.len() == self.buffer_size {
                let worst = best[best.len() - 1];
                if d > worst.0 || (d == worst.0 && j as u32 > worst.1) {
                    continue;
                }
            }
            let pos = best
                .binary_search_by(|probe| {
                    probe.0.partial_cmp(&d).unwrap().then(probe.1.cmp(&(j as u32)))
                })
                .unwrap_err();
            best.insert(pos, (d, j as u32));
            best.truncate(self.buffer_size);
        }
        self.buffers[i] = best;
    }

    /// Density of row i against the other alive rows.
    fn density(&mut self, i: usize) -> f64 {
        let need = self.k.min(self.n_alive - 1);
        if need == 0 {
            return 1.0 / DENSITY_EPS;
        }
        let alive_in_buffer = self.buffers[i]
            .iter()
            .filter(|(_, j)| self.alive[*j as usize])
            .count();
        if alive_in_buffer < need {
            self.refill(i);
        }
        let mut sum = 0.0;
        let mut taken = 0;
        for (d, j) in &self.buffers[i] {
            if self.alive[*j as usize] {
                sum += d.sqrt();
                taken += 1;
                if taken == need {
                    break;
                }
            }
        }
        debug_assert_eq!(taken, need);
        1.0 / (DENSITY_EPS + sum / need as f64)
    }

    fn remove(&mut self, rows: &[usize]) {
        for &r in rows {
            debug_assert!(self.alive[r]);
            self.alive[r] = false;
        }
        self.n_alive -= rows.len();
    }
}

/// Ranks the pool under `model`: density against the other pool rows,
/// uncertainty from the model posterior, both min-max normalized, product
/// order. Returns the top min(J, |pool|) instances.
pub fn select_informative(
    pool: &FeatureMatrix,
    model: &TrainedModel,
    cfg: &SamplingConfig,
) -> Result<Vec<ScoredInstance>> {
    cfg.validate()?;
    if pool.rows() == 0 {
        return Ok(Vec::new());
    }
    if pool.cols != model.input_dim() {
        return Err(Error::Data(format!(
            "dimension mismatch: model expects {} columns, pool has {}",
            model.input_dim(),
            pool.cols
        )));
    }
    let mut engine = DensityEngine::new(pool, cfg.k_density);
    let raw: Vec<(usize, f64, f64)> = (0..pool.rows())
        .map(|i| {
            let post = model.posterior_row(pool.row(i));
            let unc = uncertainty_from_posterior(&post, cfg.uncertainty);
            (i, engine.density(i), unc)
        })
        .collect();
    Ok(rank_pool(&raw, cfg.j))
}

/// One self-training cycle's audit record. `given_labels` are the labels
/// the pool carried (analysis only); `pseudo_labels` are what the model
/// assigned and what the moved rows were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub moved_rows: Vec<usize>,
    pub given_labels: Vec<Label>,
    pub pseudo_labels: Vec<Label>,
    pub mean_informativeness: f64,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainResult {
    pub model: TrainedModel,
    pub log: Vec<CycleRecord>,
}

/// Incremental ELM refits: hidden activations are computed once per row and
/// the normal equations are accumulated in row order, so every cycle's
/// weights are bit-identical to a batch fit on the same train sequence.
struct ElmEngine {
    hidden: usize,
    lambda: f64,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    h_pool: Vec<f64>,
    beta: Vec<f64>,
}

impl ElmEngine {
    fn new(
        basis: &ElmBasis,
        lambda: f64,
        train: &FeatureMatrix,
        train_labels: &[Label],
        pool: &FeatureMatrix,
    ) -> Result<ElmEngine> {
        let hidden = basis.hidden;
        let mut engine = ElmEngine {
            hidden,
            lambda,
            gram: vec![0.0; hidden * hidden],
            rhs: vec![0.0; hidden],
            h_pool: Vec::with_capacity(pool.rows() * hidden),
            beta: Vec::new(),
        };
        for (i, lab) in train_labels.iter().enumerate().take(train.rows()) {
            let h = basis.map(train.row(i));
            engine.accumulate(&h, *lab);
        }
        for i in 0..pool.rows() {
            engine.h_pool.extend(basis.map(pool.row(i)));
        }
        engine.resolve()?;
        Ok(engine)
    }

    fn accumulate(&mut self, h: &[f64], label: Label) {
        let t = if label == Label::Peak { 1.0 } else { -1.0 };
        let n = self.hidden;
        for (p, &hp) in h.iter().enumerate() {
            self.rhs[p] += hp * t;
            for (q, &hq) in h.iter().enumerate().skip(p) {
                self.gram[p * n + q] += hp * hq;
            }
        }
    }

    fn resolve(&mut self) -> Result<()> {
        let n = self.hidden;
        let mut a = self.gram.clone();
        for p in 0..n {
            for q in 0..p {
                a[p * n + q] = a[q * n + p];
            }
            a[p * n + p] += self.lambda;
        }
        self.beta = classifiers::solve_linear(a, self.rhs.clone())?;
        Ok(())
    }

    fn add_pool_rows(&mut self, rows: &[usize], labels: &[Label]) -> Result<()> {
        let n = self.hidden;
        for (&r, &label) in rows.iter().zip(labels) {
            let h: Vec<f64> = self.h_pool[r * n..(r + 1) * n].to_vec();
            self.accumulate(&h, label);
        }
        self.resolve()
    }

    fn posterior(&self, pool_row: usize) -> [f64; 2] {
        let n = self.hidden;
        let score: f64 = self.h_pool[pool_row * n..(pool_row + 1) * n]
            .iter()
            .zip(&self.beta)
            .map(|(h, b)| h * b)
            .sum();
        let p = if score >= 0.0 {
            1.0 / (1.0 + (-score).exp())
        } else {
            let e = score.exp();
            e / (1.0 + e)
        };
        [1.0 - p, p]
    }
}

/// Incremental kNN posteriors for pool rows against a growing train set:
/// each pool row keeps its k best (distance, train index) pairs and merges
/// the rows moved in each cycle.
struct KnnEngine {
    k: usize,
    train_values: Vec<f64>,
    train_labels: Vec<Label>,
    buffers: Vec<Vec<(f64, u32)>>,
}

impl KnnEngine {
    fn new(k: usize, train: &FeatureMatrix, train_labels: &[Label], pool: &FeatureMatrix) -> KnnEngine {
        let mut engine = KnnEngine {
            k,
            train_values: Vec::new(),
            train_labels: Vec::new(),
            buffers: vec![Vec::new(); pool.rows()],
        };
        let rows: Vec<&[f64]> = (0..train.rows()).map(|i| train.row(i)).collect();
        engine.extend_train(&rows, train_labels, pool, None);
        engine
    }

    /// Adds train rows, updating every buffer whose pool row is still alive.
    fn extend_train(
        &mut self,
        rows: &[&[f64]],
        labels: &[Label],
        pool: &FeatureMatrix,
        alive: Option<&[bool]>,
    ) {
        let start = self.train_labels.len();
        for (row, label) in rows.iter().zip(labels) {
            self.train_values.extend_from_slice(row);
            self.train_labels.push(*label);
        }
        for i in 0..self.buffers.len() {
            if alive.is_some_and(|a| !a[i]) {
                continue;
            }
            let x = pool.row(i);
            for (offset, row) in rows.iter().enumerate() {
                let idx = (start + offset) as u32;
                let d = sq_dist(x, row);
                let buf = &mut self.buffers[i];
                if buf.len() == self.k {
                    let worst = buf[self.k - 1];
                    if d > worst.0 || (d == worst.0 && idx > worst.1) {
                        continue;
                    }
                }
                let pos = buf
                    .binary_search_by(|probe| {
                        probe.0.partial_cmp(&d).unwrap().then(probe.1.cmp(&idx))
                    })
                    .unwrap_err();
                buf.insert(pos, (d, idx));
                buf.truncate(self.k);
            }
        }
    }

    fn posterior(&self, pool_row: usize) -> [f64; 2] {
        let buf = &self.buffers[pool_row];
        let mut votes = [0usize; 2];
        for (_, idx) in buf {
            votes[self.train_labels[*idx as usize].index()] += 1;
        }
        let denom = (buf.len() + 2) as f64;
        [(votes[0] + 1) as f64 / denom, (votes[1] + 1) as f64 / denom]
    }
}

enum Scorer {
    Refit(TrainedModel),
    Elm(ElmEngine),
    Knn(KnnEngine),
}

fn with_cycle(e: Error, cycle: usize) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("self-training cycle {cycle}: {m}")),
        Error::Io(m) => Error::Io(format!("self-training cycle {cycle}: {m}")),
        Error::Data(m) => Error::Data(format!("self-training cycle {cycle}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("self-training cycle {cycle}: {m}")),
    }
}

/// Iterative self-training: fit on the current train set, pseudo-label the
/// pool, move the top-J most informative instances with their pseudo-labels,
/// refit; repeat until the pool is empty (exactly ceil(|pool|/J) cycles).
/// The returned model is a fresh batch fit on the final train set, and the
/// log records every cycle.
pub fn self_train(
    train0: &FeatureMatrix,
    pool: &FeatureMatrix,
    spec: &ClassifierSpec,
    cfg: &SamplingConfig,
) -> Result<SelfTrainResult> {
    cfg.validate()?;
    spec.validate()?;
    if train0.rows() == 0 {
        return Err(Error::Data("self-training needs a nonempty initial train set".into()));
    }
    if pool.rows() > 0 && pool.cols != train0.cols {
        return Err(Error::Data(format!(
            "dimension mismatch: train has {} columns, pool has {}",
            train0.cols, pool.cols
        )));
    }

    let mut train_values = train0.values.clone();
    let mut train_labels = train0.labels.clone();
    let p = pool.rows();
    let mut log = Vec::new();

    if p > 0 {
        let mut scorer = match spec {
            ClassifierSpec::Elm { hidden_units, ridge_lambda, weight_seed, .. } => {
                let basis = ElmBasis::new(*weight_seed, *hidden_units, train0.cols);
                Scorer::Elm(
                    ElmEngine::new(&basis, *ridge_lambda, train0, &train_labels, pool)
                        .map_err(|e| with_cycle(e, 1))?,
                )
            }
            ClassifierSpec::Knn { k } => {
                Scorer::Knn(KnnEngine::new(*k, train0, &train_labels, pool))
            }
            _ => Scorer::Refit(
                classifiers::fit(spec, train0, &train_labels).map_err(|e| with_cycle(e, 1))?,
            ),
        };
        let mut density = DensityEngine::new(pool, cfg.k_density);
        let mut alive = vec![true; p];
        let mut n_alive = p;
        let mut cycle = 0;

        while n_alive > 0 {
            cycle += 1;
            let mut raw = Vec::with_capacity(n_alive);
            let mut posteriors = vec![[0.0; 2]; p];
            for i in 0..p {
                if !alive[i] {
                    continue;
                }
                let post = match &scorer {
                    Scorer::Refit(model) => model.posterior_row(pool.row(i)),
                    Scorer::Elm(engine) => engine.posterior(i),
                    Scorer::Knn(engine) => engine.posterior(i),
                };
                posteriors[i] = post;
                let unc = uncertainty_from_posterior(&post, cfg.uncertainty);
                raw.push((i, density.density(i), unc));
            }
            let scored = rank_pool(&raw, cfg.j);

            let moved_rows: Vec<usize> = scored.iter().map(|s| s.row_index).collect();
            let pseudo_labels: Vec<Label> = moved_rows
                .iter()
                .map(|&i| label_from_posterior(&posteriors[i]))
                .collect();
            let given_labels: Vec<Label> = moved_rows.iter().map(|&i| pool.labels[i]).collect();
            let mean_informativeness =
                scored.iter().map(|s| s.informativeness).sum::<f64>() / scored.len() as f64;

            for (&i, &label) in moved_rows.iter().zip(&pseudo_labels) {
                train_values.extend_from_slice(pool.row(i));
                train_labels.push(label);
                alive[i] = false;
            }
            n_alive -= moved_rows.len();
            density.remove(&moved_rows);

            match &mut scorer {
                Scorer::Refit(model) => {
                    let train = FeatureMatrix::new(
                        train0.cols,
                        train_values.clone(),
                        train_labels.clone(),
                        train0.space_tag,
                    )?;
                    *model = classifiers::fit(spec, &train, &train_labels)
                        .map_err(|e| with_cycle(e, cycle))?;
                }
                Scorer::Elm(engine) => {
                    engine
                        .add_pool_rows(&moved_rows, &pseudo_labels)
                        .map_err(|e| with_cycle(e, cycle))?;
                }
                Scorer::Knn(engine) => {
                    let rows: Vec<&[f64]> = moved_rows.iter().map(|&i| pool.row(i)).collect();
                    engine.extend_train(&rows, &pseudo_labels, pool, Some(&alive));
                }
            }

            log.push(CycleRecord {
                cycle,
                moved_rows,
                given_labels,
                pseudo_labels,
                mean_informativeness,
                train_size: train_labels.len(),
            });
        }
    }

    let final_train = FeatureMatrix::new(
        train0.cols,
        train_values,
        train_labels.clone(),
        train0.space_tag,
    )?;
    let model = classifiers::fit(spec, &final_train, &train_labels)
        .map_err(|e| with_cycle(e, log.len().max(1)))?;
    Ok(SelfTrainResult { model, log })
}

/// Writes the audit log as CSV, one row per cycle; list fields are
/// semicolon-joined.
pub fn write_audit_csv(log: &[CycleRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cycle",
        "train_size",
        "mean_informativeness",
        "moved_rows",
        "given_labels",
        "pseudo_labels",
    ])?;
    let join_rows = |rows: &[usize]| {
        rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";")
    };
    let join_labels = |labels: &[Label]| {
        labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(";")
    };
    for rec in log {
        w.write_record([
            rec.cycle.to_string(),
            rec.train_size.to_string(),
            format!("{:.6}", rec.mean_informativeness),
            join_rows(&rec.moved_rows),
            join_labels(&rec.given_labels),
            join_labels(&rec.pseudo_labels),
        ])?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpaceTag;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<f64>], labels: &[Label]) -> FeatureMatrix {
        let cols = rows[0].len();
        let values = rows.iter().flatten().copied().collect();
        FeatureMatrix::new(cols, values, labels.to_vec(), SpaceTag::Raw).unwrap()
    }

    fn blob_matrix(n_per: usize, gap: f64, seed: u64) -> FeatureMatrix {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..(2 * n_per) {
            let peak = i % 2 == 1;
            let c = if peak { gap } else { 0.0 };
            rows.push(vec![c + rng.random_range(-0.5..0.5), c + rng.random_range(-0.5..0.5)]);
            labels.push(if peak { Label::Peak } else { Label::FalsePeak });
        }
        matrix(&rows, &labels)
    }

    #[test]
    fn density_duplicates_hit_the_cap() {
        let x = vec![2.0, 3.0];
        let rows = vec![x.clone(), x.clone(), x.clone(), vec![50.0, 50.0]];
        let pool = matrix(&rows, &[Label::Peak; 4]);
        let d = knn_density(&x, &pool, 3).unwrap();
        assert_abs_diff_eq!(d, 1.0 / DENSITY_EPS, epsilon = 1.0);
    }

    #[test]
    fn density_hand_mean_distance() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let pool = matrix(&rows, &[Label::Peak; 3]);
        let d = knn_density(&[0.0, 0.0], &pool, 3).unwrap();
        assert_abs_diff_eq!(d, 1.0 / (DENSITY_EPS + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn density_halves_when_coordinates_double() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let doubled: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let pool = matrix(&doubled, &[Label::Peak; 3]);
        let d = knn_density(&[0.0, 0.0], &pool, 3).unwrap();
        assert_abs_diff_eq!(d, 1.0 / (DENSITY_EPS + 2.0), epsilon = 1e-12);
    }

    #[test]
    fn density_rejects_small_pool() {
        let pool = matrix(&[vec![0.0, 0.0]], &[Label::Peak]);
        assert!(knn_density(&[0.0, 0.0], &pool, 5).is_err());
    }

    #[test]
    fn uncertainty_hand_values() {
        let lc = UncertaintyKind::LeastConfident;
        assert_eq!(uncertainty_from_posterior(&[1.0, 0.0], lc), 0.0);
        assert_eq!(uncertainty_from_posterior(&[0.5, 0.5], lc), 1.0);
        assert_abs_diff_eq!(
            uncertainty_from_posterior(&[0.75, 0.25], lc),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn margin_equals_least_confident_on_binary_posteriors() {
        for p1 in [0.0, 0.13, 0.4, 0.5, 0.77, 1.0] {
            let post = [1.0 - p1, p1];
            assert_abs_diff_eq!(
                uncertainty_from_posterior(&post, UncertaintyKind::LeastConfident),
                uncertainty_from_posterior(&post, UncertaintyKind::Margin),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn uncertainty_through_a_real_model() {
        // kNN with k=2 and two Peak neighbors: posterior (1/4, 3/4), so the
        // rescaled uncertainty is (1−0.75)/0.5 = 0.5.
        let train = matrix(&[vec![0.0], vec![0.1]], &[Label::Peak, Label::Peak]);
        let model =
            classifiers::fit(&ClassifierSpec::knn(2), &train, &train.labels.clone()).unwrap();
        assert_abs_diff_eq!(uncertainty(&model, &[0.05]), 0.5, epsilon = 1e-12);
    }

    fn any_model() -> TrainedModel {
        let train = blob_matrix(20, 4.0, 3);
        classifiers::fit(&ClassifierSpec::knn(3), &train, &train.labels.clone()).unwrap()
    }

    #[test]
    fn select_returns_whole_small_pool() {
        let model = any_model();
        let pool = blob_matrix(1, 4.0, 5);
        assert_eq!(pool.rows(), 2);
        let cfg = SamplingConfig { j: 20, ..Default::default() };
        let out = select_informative(&pool, &model, &cfg).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn select_equal_scores_ties_by_row_index() {
        let model = any_model();
        // Identical rows: all densities and uncertainties coincide.
        let rows = vec![vec![1.0, 1.0]; 8];
        let pool = matrix(&rows, &[Label::Peak; 8]);
        let cfg = SamplingConfig { j: 3, ..Default::default() };
        let out = select_informative(&pool, &model, &cfg).unwrap();
        let picked: Vec<usize> = out.iter().map(|s| s.row_index).collect();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn select_matches_exhaustive_oracle() {
        // Two clusters of confident rows plus one boundary row duplicated
        // several times: the duplicate must rank first, and the full
        // ranking must match an exhaustive recomputation.
        let gap = 4.0;
        let mut rows = vec![vec![gap / 2.0, gap / 2.0]; 5];
        for i in 0..6 {
            let off = 0.3 * i as f64;
            rows.push(vec![off, 0.1 * i as f64]);
            rows.push(vec![gap + off, gap - 0.1 * i as f64]);
        }
        let pool = matrix(&rows, &[Label::Peak; 17]);
        let model = {
            let train = {
                use rand::Rng;
                let mut rng = crate::seed::rng(8);
                let mut t_rows = Vec::new();
                let mut t_labels = Vec::new();
                for i in 0..40 {
                    let peak = i % 2 == 1;
                    let c = if peak { gap } else { 0.0 };
                    t_rows.push(vec![
                        c + rng.random_range(-0.6..0.6),
                        c + rng.random_range(-0.6..0.6),
                    ]);
                    t_labels.push(if peak { Label::Peak } else { Label::FalsePeak });
                }
                matrix(&t_rows, &t_labels)
            };
            classifiers::fit(&ClassifierSpec::knn(5), &train, &train.labels.clone()).unwrap()
        };
        let cfg = SamplingConfig { j: 17, k_density: 3, ..Default::default() };
        let out = select_informative(&pool, &model, &cfg).unwrap();
        assert_eq!(out[0].row_index, 0, "duplicated boundary row must rank first");

        // Exhaustive oracle: recompute every score from scratch.
        let mut dens = Vec::new();
        let mut uncs = Vec::new();
        for i in 0..pool.rows() {
            let mut dists: Vec<f64> = (0..pool.rows())
                .filter(|&j| j != i)
                .map(|j| {
                    pool.row(i)
                        .iter()
                        .zip(pool.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean = dists[..3].iter().sum::<f64>() / 3.0;
            dens.push(1.0 / (DENSITY_EPS + mean));
            let post = model.posterior_row(pool.row(i));
            uncs.push((1.0 - post[0].max(post[1])) / 0.5);
        }
        let norm = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<f64>>()
        };
        let dn = norm(&dens);
        let un = norm(&uncs);
        let mut expect: Vec<(usize, f64)> =
            (0..pool.rows()).map(|i| (i, dn[i] * un[i])).collect();
        expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (got, (want_row, want_score)) in out.iter().zip(&expect) {
            assert_eq!(got.row_index, *want_row);
            assert_abs_diff_eq!(got.informativeness, *want_score, epsilon = 1e-12);
        }
    }

    #[test]
    fn scored_instances_satisfy_product_invariant() {
        let model = any_model();
        let pool = blob_matrix(15, 4.0, 9);
        let cfg = SamplingConfig::default();
        for s in select_informative(&pool, &model, &cfg).unwrap() {
            assert_abs_diff_eq!(
                s.informativeness,
                s.density * s.uncertainty,
                epsilon = 1e-12
            );
            assert!(s.density >= 0.0);
            assert!((0.0..=1.0).contains(&s.uncertainty));
        }
    }

    #[test]
    fn empty_pool_equals_plain_training() {
        let train = blob_matrix(20, 4.0, 11);
        let empty = FeatureMatrix::new(2, Vec::new(), Vec::new(), SpaceTag::Raw).unwrap();
        for spec in [
            ClassifierSpec::tree(Some(5)),
            ClassifierSpec::knn(3),
            ClassifierSpec::elm(16, 1e-3, 4),
            ClassifierSpec::gaussian_nb(),
        ] {
            let out = self_train(&train, &empty, &spec, &SamplingConfig::default()).unwrap();
            assert!(out.log.is_empty());
            let plain = classifiers::fit(&spec, &train, &train.labels.clone()).unwrap();
            assert_eq!(out.model, plain);
        }
    }

    #[test]
    fn cycle_count_is_ceiling_of_pool_over_j() {
        let train = blob_matrix(10, 4.0, 13);
        let pool = blob_matrix(23, 4.0, 14);
        assert_eq!(pool.rows(), 46);
        // 46 rows at J=20 → cycles of 20, 20, 6.
        let cfg = SamplingConfig { j: 20, ..Default::default() };
        let out = self_train(&train, &pool, &ClassifierSpec::knn(3), &cfg).unwrap();
        assert_eq!(out.log.len(), 3);
        let sizes: Vec<usize> = out.log.iter().map(|c| c.moved_rows.len()).collect();
        assert_eq!(sizes, vec![20, 20, 6]);
        assert_eq!(out.log[0].cycle, 1);
        assert_eq!(out.log[2].cycle, 3);

        // Each pool row moves exactly once: the union of moved rows is a
        // permutation of 0..46.
        let mut seen = vec![false; 46];
        for rec in &out.log {
            for &r in &rec.moved_rows {
                assert!(!seen[r], "row {r} moved twice");
                seen[r] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
        // Train grows by exactly the moved count each cycle.
        assert_eq!(out.log[0].train_size, 20 + 20);
        assert_eq!(out.log[1].train_size, 20 + 40);
        assert_eq!(out.log[2].train_size, 20 + 46);
    }

    #[test]
    fn one_cycle_when_budget_covers_pool() {
        let train = blob_matrix(10, 4.0, 15);
        let pool = blob_matrix(12, 4.0, 16);
        let cfg = SamplingConfig { j: 100, ..Default::default() };
        let out = self_train(&train, &pool, &ClassifierSpec::knn(3), &cfg).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].moved_rows.len(), 24);
    }

    /// Reference implementation: plain batch refits and select_informative
    /// on a shrinking subset matrix. The engine-backed self_train must match
    /// it exactly, moved row for moved row, and end on the same model.
    fn reference_self_train(
        train0: &FeatureMatrix,
        pool: &FeatureMatrix,
        spec: &ClassifierSpec,
        cfg: &SamplingConfig,
    ) -> (TrainedModel, Vec<Vec<usize>>) {
        let mut train_values = train0.values.clone();
        let mut train_labels = train0.labels.clone();
        let mut alive: Vec<usize> = (0..pool.rows()).collect();
        let mut moves = Vec::new();
        while !alive.is_empty() {
            let train = FeatureMatrix::new(
                train0.cols,
                train_values.clone(),
                train_labels.clone(),
                train0.space_tag,
            )
            .unwrap();
            let model = classifiers::fit(spec, &train, &train_labels).unwrap();
            let sub = pool.subset(&alive);
            let scored = select_informative(&sub, &model, cfg).unwrap();
            let moved: Vec<usize> = scored.iter().map(|s| alive[s.row_index]).collect();
            for &g in &moved {
                train_values.extend_from_slice(pool.row(g));
                train_labels.push(
                    classifiers::label_from_posterior(&model.posterior_row(pool.row(g))),
                );
            }
            alive.retain(|g| !moved.contains(g));
            moves.push(moved);
        }
        let train = FeatureMatrix::new(
            train0.cols,
            train_values,
            train_labels.clone(),
            train0.space_tag,
        )
        .unwrap();
        (classifiers::fit(spec, &train, &train_labels).unwrap(), moves)
    }

    #[test]
    fn engines_match_reference_loop_exactly() {
        let train = blob_matrix(15, 3.0, 21);
        let pool = blob_matrix(22, 3.0, 22);
        let cfg = SamplingConfig { j: 7, k_density: 4, ..Default::default() };
        for spec in [
            ClassifierSpec::elm(24, 1e-3, 6),
            ClassifierSpec::knn(5),
            ClassifierSpec::tree(Some(8)),
            ClassifierSpec::gaussian_nb(),
        ] {
            let fast = self_train(&train, &pool, &spec, &cfg).unwrap();
            let (ref_model, ref_moves) = reference_self_train(&train, &pool, &spec, &cfg);
            let fast_moves: Vec<Vec<usize>> =
                fast.log.iter().map(|c| c.moved_rows.clone()).collect();
            assert_eq!(fast_moves, ref_moves, "{} moved different rows", spec.kind_name());
            assert_eq!(fast.model, ref_model, "{} final model differs", spec.kind_name());
        }
    }

    #[test]
    fn clean_separable_data_is_not_hurt_by_self_training() {
        // Paired runs on the synthetic generator, 5 seeds: self-training
        // must stay within 0.01 F1 of plain training on clean data.
        for seed in 0..5u64 {
            let cfg = crate::prach::GenConfig {
                n_records: 700,
                seed: 100 + seed,
                ..Default::default()
            };
            let ds = crate::prach::generate_dataset(&cfg).unwrap();
            let x = ds.to_matrix();
            let n = x.rows();
            let test_idx: Vec<usize> = (0..n).filter(|i| i % 3 == 0).collect();
            let train_idx: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
            let x_test = x.subset(&test_idx);
            let x_train = x.subset(&train_idx);
            // First tenth of the train rows seed the loop, rest is pool.
            let n0 = train_idx.len() / 10;
            let seed_idx: Vec<usize> = (0..n0).collect();
            let pool_idx: Vec<usize> = (n0..train_idx.len()).collect();
            let x_seed = x_train.subset(&seed_idx);
            let x_pool = x_train.subset(&pool_idx);

            let spec = ClassifierSpec::knn(5);
            let cfg_s = SamplingConfig { j: 20, ..Default::default() };
            let sampled = self_train(&x_seed, &x_pool, &spec, &cfg_s).unwrap();
            let plain =
                classifiers::fit(&spec, &x_train, &x_train.labels.clone()).unwrap();
            let f1_sampled = crate::eval::f1_score(
                &x_test.labels,
                &sampled.model.predict(&x_test).unwrap(),
            );
            let f1_plain =
                crate::eval::f1_score(&x_test.labels, &plain.predict(&x_test).unwrap());
            assert!(
                f1_sampled >= f1_plain - 0.01,
                "seed {seed}: sampled {f1_sampled} vs plain {f1_plain}"
            );
        }
    }

    #[test]
    fn audit_log_round_trips_to_csv() {
        let train = blob_matrix(10, 4.0, 31);
        let pool = blob_matrix(9, 4.0, 32);
        let cfg = SamplingConfig { j: 5, ..Default::default() };
        let out = self_train(&train, &pool, &ClassifierSpec::gaussian_nb(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.csv");
        write_audit_csv(&out.log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + out.log.len());
        assert!(lines[0].starts_with("cycle,train_size,mean_informativeness"));
    }

    proptest! {
        /// Lowering one row's density while holding everything else fixed
        /// never improves its rank.
        #[test]
        fn lower_density_never_improves_rank(
            dens in proptest::collection::vec(0.0..10.0f64, 2..30),
            uncs_seed in proptest::collection::vec(0.0..1.0f64, 30),
            pick in 0usize..30,
            shrink in 0.01..0.99f64,
        ) {
            let n = dens.len();
            let pick = pick % n;
            let uncs = &uncs_seed[..n];
            let raw: Vec<(usize, f64, f64)> =
                (0..n).map(|i| (i, dens[i], uncs[i])).collect();
            let before = rank_pool(&raw, n);
            let pos_before = before.iter().position(|s| s.row_index == pick).unwrap();

            let mut lowered = raw.clone();
            lowered[pick].1 *= shrink;
            let after = rank_pool(&lowered, n);
            let pos_after = after.iter().position(|s| s.row_index == pick).unwrap();
            prop_assert!(pos_after >= pos_before,
                "rank improved from {pos_before} to {pos_after}");
        }
    }
}
