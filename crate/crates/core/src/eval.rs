//! Metrics and the experiment harness: stratified splits, the repeated
//! noise-level grid with paired seed-only baselines, decision-level fusion
//! of the two feature-space streams, and the batch-size sweep.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, label_from_posterior, ClassifierSpec};
use crate::data::{Dataset, FeatureMatrix, Label, SpaceTag};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionModel};
use crate::noise::{self, NoiseMode, NoiseSpec};
use crate::prach::{self, GenConfig};
use crate::sampling::{self, SamplingConfig};
use crate::seed;
use crate::transform::{self, PsrConfig};

/// F1 of the Peak class: 2TP / (2TP + FP + FN), 0 when the denominator is 0.
pub fn f1(y_true: &[Label], y_pred: &[Label]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::Data("f1 needs at least one label".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} true vs {} predicted labels",
            y_true.len(),
            y_pred.len()
        )));
    }
    Ok(f1_score(y_true, y_pred))
}

/// Infallible F1 over equal-length slices; callers guarantee the lengths.
pub fn f1_score(y_true: &[Label], y_pred: &[Label]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len(), "f1_score length mismatch");
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fni = 0usize;
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Peak, Label::Peak) => tp += 1,
            (Label::FalsePeak, Label::Peak) => fp += 1,
            (Label::Peak, Label::FalsePeak) => fni += 1,
            (Label::FalsePeak, Label::FalsePeak) => {}
        }
    }
    let denom = 2 * tp + fp + fni;
    if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 }
}

/// Fraction of matching labels.
pub fn accuracy(y_true: &[Label], y_pred: &[Label]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::Data("accuracy needs at least one label".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} true vs {} predicted labels",
            y_true.len(),
            y_pred.len()
        )));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Splits label indices per class: shuffles each class's indices and takes a
/// proportional head for the first part. Both parts keep ≥ 1 member of every
/// class (proportions are clamped), and both come back sorted ascending.
pub fn stratified_indices(
    labels: &[Label],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0,1), got {fraction}")));
    }
    let mut rng = seed::rng(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [Label::FalsePeak, Label::Peak] {
        let mut idx: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {} has {} members, need at least 2 to split",
                class.as_str(),
                idx.len()
            )));
        }
        // Fisher-Yates; clamp keeps one member of the class on each side.
        for i in (1..idx.len()).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            idx.swap(i, j);
        }
        let take = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        first.extend_from_slice(&idx[..take]);
        second.extend_from_slice(&idx[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Stratified train/test split of a dataset; deterministic per seed.
pub fn stratified_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let labels = dataset.labels();
    let (tr, te) = stratified_indices(&labels, train_fraction, seed)?;
    Ok((dataset.subset(&tr), dataset.subset(&te)))
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.0, 0.05, 0.10, 0.15]
}
fn default_noise_mode() -> NoiseMode {
    NoiseMode::LabelFlip
}
fn default_classifiers() -> Vec<String> {
    vec!["tree".into(), "knn".into(), "elm".into(), "nb".into()]
}
fn default_feature_spaces() -> Vec<SpaceTag> {
    vec![SpaceTag::Psr, SpaceTag::Pca]
}
fn default_pca_components() -> usize {
    2
}
fn default_repeats() -> usize {
    5
}
fn default_split() -> f64 {
    0.70
}
fn default_fusion() -> bool {
    true
}
fn default_knn_k() -> usize {
    5
}
fn default_elm_hidden() -> usize {
    128
}
fn default_elm_lambda() -> f64 {
    1e-3
}
fn default_nb_variance_floor() -> f64 {
    1e-9
}

/// Full harness configuration; everything downstream derives from
/// `master_seed`, so identical configs yield byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub noise_levels: Vec<f64>,
    /// Harness-level corruption mode applied at each level.
    pub noise_mode: NoiseMode,
    /// Classifier kinds to run in every feature space.
    pub classifiers: Vec<String>,
    pub feature_spaces: Vec<SpaceTag>,
    pub psr: PsrConfig,
    pub pca_components: usize,
    pub sampling: SamplingConfig,
    pub repeats: usize,
    /// Train fraction of the outer split.
    pub split: f64,
    /// Decision-level fusion runs only when true and both spaces are present.
    pub fusion: bool,
    pub master_seed: u64,
    /// None grows trees to purity; the depth cap applies to both variants.
    pub tree_max_depth: Option<usize>,
    pub knn_k: usize,
    pub elm_hidden: usize,
    pub elm_lambda: f64,
    pub nb_variance_floor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gen: GenConfig::default(),
            noise_levels: default_noise_levels(),
            noise_mode: default_noise_mode(),
            classifiers: default_classifiers(),
            feature_spaces: default_feature_spaces(),
            psr: PsrConfig::default(),
            pca_components: default_pca_components(),
            sampling: SamplingConfig::default(),
            repeats: default_repeats(),
            split: default_split(),
            fusion: default_fusion(),
            master_seed: 7,
            tree_max_depth: None,
            knn_k: default_knn_k(),
            elm_hidden: default_elm_hidden(),
            elm_lambda: default_elm_lambda(),
            nb_variance_floor: default_nb_variance_floor(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.psr.validate()?;
        self.sampling.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split must be in (0,1), got {}", self.split)));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::Config("noise_levels must be nonempty".into()));
        }
        for &l in &self.noise_levels {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("noise level {l} outside [0,1]")));
            }
        }
        if self.feature_spaces.is_empty() {
            return Err(Error::Config("feature_spaces must be nonempty".into()));
        }
        for s in &self.feature_spaces {
            if *s == SpaceTag::Raw {
                return Err(Error::Config("feature_spaces supports psr and pca only".into()));
            }
            if self.feature_spaces.iter().filter(|t| *t == s).count() > 1 {
                return Err(Error::Config(format!("duplicate feature space {}", s.as_str())));
            }
        }
        if self.classifiers.is_empty() {
            return Err(Error::Config("classifiers must be nonempty".into()));
        }
        for k in &self.classifiers {
            if !matches!(k.as_str(), "tree" | "knn" | "elm" | "nb") {
                return Err(Error::Config(format!("unknown classifier kind '{k}'")));
            }
            if self.classifiers.iter().filter(|o| *o == k).count() > 1 {
                return Err(Error::Config(format!("duplicate classifier kind '{k}'")));
            }
        }
        if self.pca_components == 0 || self.pca_components > crate::data::N_FEATURES {
            return Err(Error::Config(format!(
                "pca_components must be in 1..={}, got {}",
                crate::data::N_FEATURES,
                self.pca_components
            )));
        }
        // Validate the per-kind specs once with a placeholder seed.
        for k in &self.classifiers {
            self.spec_for(k, 0)?.validate()?;
        }
        Ok(())
    }

    /// Builds the concrete spec for a kind; `weight_seed` only affects ELM.
    pub fn spec_for(&self, kind: &str, weight_seed: u64) -> Result<ClassifierSpec> {
        match kind {
            "tree" => Ok(ClassifierSpec::tree(self.tree_max_depth)),
            "knn" => Ok(ClassifierSpec::knn(self.knn_k)),
            "elm" => Ok(ClassifierSpec::elm(self.elm_hidden, self.elm_lambda, weight_seed)),
            "nb" => Ok(ClassifierSpec::GaussianNb { variance_floor: self.nb_variance_floor }),
            other => Err(Error::Config(format!("unknown classifier kind '{other}'"))),
        }
    }
}

/// Mean and population standard deviation over the repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn stats(f1s: &[f64], accs: &[f64]) -> CellStats {
    let (mean_f1, std_f1) = mean_std(f1s);
    let (mean_accuracy, std_accuracy) = mean_std(accs);
    CellStats { mean_f1, std_f1, mean_accuracy, std_accuracy }
}

/// One (feature space, classifier, noise level) grid cell: the seed-only
/// baseline and the self-trained variant, paired per repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub space: SpaceTag,
    pub classifier: String,
    pub noise_level: f64,
    pub seeds: Vec<u64>,
    pub baseline: Option<CellStats>,
    pub sampled: Option<CellStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub mode: String,
    pub noise_level: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub error: Option<String>,
}

/// Best deployed single stream per repeat, and which kinds were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStreamRow {
    pub noise_level: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub chosen_psr: Vec<String>,
    pub chosen_pca: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub fusion: Vec<FusionRow>,
    pub single_stream: Vec<SingleStreamRow>,
    pub errors: Vec<String>,
}

/// Per-repeat outcome of one grid cell.
#[derive(Debug, Clone)]
struct CellOutcome {
    baseline_f1: f64,
    baseline_acc: f64,
    sampled_f1: f64,
    sampled_acc: f64,
    /// Self-trained model's posteriors on the test rows, kept for fusion.
    test_posteriors: Vec<[f64; 2]>,
    /// Self-trained model's predictions on its own train rows; empty unless
    /// fusion needs them for deployed-stream ranking.
    train_pred: Vec<Label>,
}

#[derive(Debug, Clone)]
struct FusionOutcome {
    weighted_f1: f64,
    meta_f1: f64,
    best_single_f1: f64,
    chosen_psr: String,
    chosen_pca: String,
}

/// Train/test matrices for one feature space plus the clean test labels.
struct SpaceData {
    x_train: FeatureMatrix,
    x_test: FeatureMatrix,
}

fn transform_space(
    space: SpaceTag,
    train: &Dataset,
    test: &Dataset,
    psr: &PsrConfig,
    pca_components: usize,
) -> Result<SpaceData> {
    match space {
        SpaceTag::Psr => Ok(SpaceData {
            x_train: transform::psr_features(train, psr)?,
            x_test: transform::psr_features(test, psr)?,
        }),
        SpaceTag::Pca => {
            let raw_train = train.to_matrix();
            let raw_test = test.to_matrix();
            // Fit on train only; the test set never touches the model.
            let model = transform::pca_fit(&raw_train, pca_components)?;
            Ok(SpaceData {
                x_train: transform::pca_project(&model, &raw_train)?,
                x_test: transform::pca_project(&model, &raw_test)?,
            })
        }
        SpaceTag::Raw => Err(Error::Config("raw feature space is not run by the harness".into())),
    }
}

fn cell_seed(master: u64, space: SpaceTag, kind: &str, repeat: usize, level_index: usize) -> u64 {
    seed::derive(
        master,
        &["cell", space.as_str(), kind, &repeat.to_string(), &level_index.to_string()],
    )
}

/// Fits the paired pair for one cell: a baseline on the labeled seed rows
/// only, and the self-trained variant absorbing the pool. Scored against the
/// clean test labels.
fn run_cell(
    data: &SpaceData,
    truth: &[Label],
    spec: &ClassifierSpec,
    cs: u64,
    sampling_cfg: &SamplingConfig,
    want_train_pred: bool,
) -> Result<CellOutcome> {
    let train_labels = &data.x_train.labels;
    let (seed_rows, pool_rows) =
        stratified_indices(train_labels, sampling_cfg.initial_fraction, seed::derive(cs, &["initial"]))?;
    let x_seed = data.x_train.subset(&seed_rows);
    let x_pool = data.x_train.subset(&pool_rows);

    let baseline = classifiers::fit(spec, &x_seed, &x_seed.labels)?;
    let baseline_pred = baseline.predict(&data.x_test)?;
    let baseline_f1 = f1_score(truth, &baseline_pred);
    let baseline_acc = accuracy(truth, &baseline_pred)?;

    let mut st_cfg = *sampling_cfg;
    st_cfg.seed = seed::derive(cs, &["sampling"]);
    let st = sampling::self_train(&x_seed, &x_pool, spec, &st_cfg)?;
    let test_posteriors = st.model.posterior(&data.x_test)?;
    let sampled_pred: Vec<Label> = test_posteriors.iter().map(label_from_posterior).collect();
    let sampled_f1 = f1_score(truth, &sampled_pred);
    let sampled_acc = accuracy(truth, &sampled_pred)?;
    let train_pred =
        if want_train_pred { st.model.predict(&data.x_train)? } else { Vec::new() };

    Ok(CellOutcome {
        baseline_f1,
        baseline_acc,
        sampled_f1,
        sampled_acc,
        test_posteriors,
        train_pred,
    })
}

/// Out-of-fold Peak posteriors for one (space, kind) stream: 2-fold split of
/// the train rows, each fold scored by a self-trained model fitted on the
/// other fold, so the meta-learner sees the deployed pipeline's behavior.
fn oof_stream(
    data: &SpaceData,
    folds: &(Vec<usize>, Vec<usize>),
    spec: &ClassifierSpec,
    cs: u64,
    sampling_cfg: &SamplingConfig,
) -> Result<(Vec<f64>, Vec<Label>)> {
    let train_labels = &data.x_train.labels;
    let mut oof_peak = vec![0.0; train_labels.len()];
    let mut oof_pred = vec![Label::FalsePeak; train_labels.len()];
    let fold_views = [&folds.0, &folds.1];
    for fi in 0..2 {
        let va = fold_views[fi];
        let tr = fold_views[1 - fi];
        let tr_labels: Vec<Label> = tr.iter().map(|&i| train_labels[i]).collect();
        let (s0, sp) = stratified_indices(
            &tr_labels,
            sampling_cfg.initial_fraction,
            seed::derive(cs, &["fold", &fi.to_string(), "init"]),
        )?;
        let seed_rows: Vec<usize> = s0.iter().map(|&j| tr[j]).collect();
        let pool_rows: Vec<usize> = sp.iter().map(|&j| tr[j]).collect();
        let x_seed = data.x_train.subset(&seed_rows);
        let x_pool = data.x_train.subset(&pool_rows);
        let fold_spec = spec.with_seed(seed::derive(cs, &["fold", &fi.to_string()]));
        let mut st_cfg = *sampling_cfg;
        st_cfg.seed = seed::derive(cs, &["fold", &fi.to_string(), "sampling"]);
        let st = sampling::self_train(&x_seed, &x_pool, &fold_spec, &st_cfg)?;
        let x_va = data.x_train.subset(va);
        let post = st.model.posterior(&x_va)?;
        for (j, p) in va.iter().zip(&post) {
            oof_peak[*j] = p[1];
            oof_pred[*j] = label_from_posterior(p);
        }
    }
    Ok((oof_peak, oof_pred))
}

/// Chooses the best kind per space by out-of-fold F1, fits both fusion
/// modes on the out-of-fold stream posteriors, and scores them on the test
/// rows using the deployed self-trained cell models.
#[allow(clippy::too_many_arguments)]
fn run_fusion(
    spaces: &[SpaceTag],
    kinds: &[String],
    space_data: &[SpaceData],
    cell_outcomes: &[Vec<CellOutcome>],
    truth: &[Label],
    cfg: &ExperimentConfig,
    repeat: usize,
    level_index: usize,
) -> Result<FusionOutcome> {
    let psr_pos = spaces.iter().position(|s| *s == SpaceTag::Psr);
    let pca_pos = spaces.iter().position(|s| *s == SpaceTag::Pca);
    let (psr_pos, pca_pos) = match (psr_pos, pca_pos) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config("fusion needs both psr and pca feature spaces".into())),
    };

    // Per space: 2-fold OOF posteriors and predictions for every kind.
    let mut all_streams: Vec<Vec<(Vec<f64>, Vec<Label>)>> = Vec::with_capacity(2);
    for &sp in &[psr_pos, pca_pos] {
        let space = spaces[sp];
        let folds = {
            let labels = &space_data[sp].x_train.labels;
            stratified_indices(
                labels,
                0.5,
                seed::derive(
                    cfg.master_seed,
                    &["oof", &repeat.to_string(), &level_index.to_string(), space.as_str()],
                ),
            )?
        };
        let streams: Vec<Result<(Vec<f64>, Vec<Label>)>> = kinds
            .par_iter()
            .map(|kind| {
                let cs = cell_seed(cfg.master_seed, space, kind, repeat, level_index);
                let spec = cfg.spec_for(kind, seed::derive(cs, &["weights"]))?;
                oof_stream(&space_data[sp], &folds, &spec, cs, &cfg.sampling)
            })
            .collect();
        let mut outs = Vec::with_capacity(kinds.len());
        for res in streams {
            outs.push(res?);
        }
        all_streams.push(outs);
    }

    // Both spaces index the same train rows, so the OOF features align.
    let train_labels = &space_data[psr_pos].x_train.labels;
    let f1_on = |pred: &[Label], rows: &[usize]| {
        let t: Vec<Label> = rows.iter().map(|&i| train_labels[i]).collect();
        let p: Vec<Label> = rows.iter().map(|&i| pred[i]).collect();
        f1_score(&t, &p)
    };
    let select = |streams: &[(Vec<f64>, Vec<Label>)], rows: &[usize]| {
        let mut best = (0usize, -1.0f64);
        for (k, (_, pred)) in streams.iter().enumerate() {
            let score = f1_on(pred, rows);
            if score > best.1 {
                best = (k, score);
            }
        }
        best.0
    };
    let keep_rows = |a: &[Label], b: &[Label]| -> Vec<usize> {
        (0..train_labels.len())
            .filter(|&i| a[i] == train_labels[i] || b[i] == train_labels[i])
            .collect()
    };
    let two_class = |rows: &[usize]| {
        rows.iter().any(|&i| train_labels[i] == Label::Peak)
            && rows.iter().any(|&i| train_labels[i] == Label::FalsePeak)
    };

    // Pass 1 ranks streams by out-of-fold F1 against the given labels. Under
    // label noise that reference compresses all streams toward the flip rate,
    // so pass 2 re-ranks on the corroborated rows: rows where at least one
    // pass-1 stream's out-of-fold prediction agrees with its given label.
    // Flipped labels almost never survive that filter, so it is a mostly
    // clean reference. Pass 2 scores each DEPLOYED model's own train-row
    // predictions there, because the half-data out-of-fold fits can diverge
    // from full-data self-training; a self-trained model cannot game this
    // in-sample score since its pool predictions are its own pseudo-labels.
    // Out-of-fold F1 on the same rows breaks ties. A filter that would leave
    // fewer than two classes falls back to the full row set.
    let every_row: Vec<usize> = (0..train_labels.len()).collect();
    let mut chosen = [0usize; 2];
    for slot in 0..2 {
        chosen[slot] = select(&all_streams[slot], &every_row);
    }
    let keep = keep_rows(&all_streams[0][chosen[0]].1, &all_streams[1][chosen[1]].1);
    if two_class(&keep) {
        for (slot, &sp) in [psr_pos, pca_pos].iter().enumerate() {
            let mut best = (0usize, (-1.0f64, -1.0f64));
            for (k, (_, oof_pred)) in all_streams[slot].iter().enumerate() {
                let key = (f1_on(&cell_outcomes[sp][k].train_pred, &keep), f1_on(oof_pred, &keep));
                if key.0 > best.1 .0 || (key.0 == best.1 .0 && key.1 > best.1 .1) {
                    best = (k, key);
                }
            }
            chosen[slot] = best.0;
        }
    }
    let mut keep = keep_rows(&all_streams[0][chosen[0]].1, &all_streams[1][chosen[1]].1);
    if !two_class(&keep) {
        keep = every_row;
    }

    // Weights and the meta-learner both come from the same corroborated rows
    // the selection was scored on.
    let chosen_f1 = [
        f1_on(&cell_outcomes[psr_pos][chosen[0]].train_pred, &keep),
        f1_on(&cell_outcomes[pca_pos][chosen[1]].train_pred, &keep),
    ];
    let weighted = FusionModel::weighted((chosen_f1[0], chosen_f1[1]))?;
    let kept_feats: Vec<[f64; 2]> = keep
        .iter()
        .map(|&i| [all_streams[0][chosen[0]].0[i], all_streams[1][chosen[1]].0[i]])
        .collect();
    let kept_labels: Vec<Label> = keep.iter().map(|&i| train_labels[i]).collect();
    let meta = fusion::fit_meta_nb(&kept_feats, &kept_labels)?;

    let psr_test = &cell_outcomes[psr_pos][chosen[0]].test_posteriors;
    let pca_test = &cell_outcomes[pca_pos][chosen[1]].test_posteriors;
    let mut wa_pred = Vec::with_capacity(truth.len());
    let mut meta_pred = Vec::with_capacity(truth.len());
    for (p_psr, p_pca) in psr_test.iter().zip(pca_test) {
        wa_pred.push(fusion::fuse_predict(&weighted, p_psr, p_pca)?);
        meta_pred.push(fusion::fuse_predict(&meta, p_psr, p_pca)?);
    }
    let best_single_f1 = cell_outcomes[psr_pos][chosen[0]]
        .sampled_f1
        .max(cell_outcomes[pca_pos][chosen[1]].sampled_f1);
    Ok(FusionOutcome {
        weighted_f1: f1_score(truth, &wa_pred),
        meta_f1: f1_score(truth, &meta_pred),
        best_single_f1,
        chosen_psr: kinds[chosen[0]].clone(),
        chosen_pca: kinds[chosen[1]].clone(),
    })
}

/// Everything one repeat produces: per (level, space, kind) cell outcomes
/// and per-level fusion outcomes.
struct RepeatResult {
    cells: Vec<Vec<Vec<std::result::Result<CellOutcome, String>>>>,
    fusion: Vec<std::result::Result<FusionOutcome, String>>,
}

fn run_repeat(cfg: &ExperimentConfig, repeat: usize) -> Result<RepeatResult> {
    let gen_cfg = GenConfig {
        seed: seed::derive(cfg.master_seed, &["gen", &repeat.to_string()]),
        ..cfg.gen.clone()
    };
    let clean = prach::generate_dataset(&gen_cfg)?;
    let clean_labels = clean.labels();

    let mut cells = Vec::with_capacity(cfg.noise_levels.len());
    let mut fusion_rows = Vec::with_capacity(cfg.noise_levels.len());
    for (li, &level) in cfg.noise_levels.iter().enumerate() {
        let noise_spec = NoiseSpec {
            fraction: level,
            mode: cfg.noise_mode,
            seed: seed::derive(cfg.master_seed, &["inject", &repeat.to_string(), &li.to_string()]),
        };
        let noisy = noise::inject(&clean, &noise_spec)?;
        let (train_idx, test_idx) = stratified_indices(
            &noisy.labels(),
            cfg.split,
            seed::derive(cfg.master_seed, &["split", &repeat.to_string(), &li.to_string()]),
        )?;
        let train_ds = noisy.subset(&train_idx);
        let test_ds = noisy.subset(&test_idx);
        // Scoring is always against the pre-injection labels.
        let truth: Vec<Label> = test_idx.iter().map(|&i| clean_labels[i]).collect();

        let space_data: Vec<SpaceData> = cfg
            .feature_spaces
            .par_iter()
            .map(|&s| transform_space(s, &train_ds, &test_ds, &cfg.psr, cfg.pca_components))
            .collect::<Result<_>>()?;

        let do_fusion = cfg.fusion && cfg.feature_spaces.len() == 2;
        let level_cells: Vec<Vec<std::result::Result<CellOutcome, String>>> = cfg
            .feature_spaces
            .par_iter()
            .enumerate()
            .map(|(si, &space)| {
                cfg.classifiers
                    .par_iter()
                    .map(|kind| {
                        let cs = cell_seed(cfg.master_seed, space, kind, repeat, li);
                        let spec = cfg
                            .spec_for(kind, seed::derive(cs, &["weights"]))
                            .map_err(|e| e.to_string())?;
                        run_cell(&space_data[si], &truth, &spec, cs, &cfg.sampling, do_fusion)
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            })
            .collect();

        // Fusion runs only when every contributing cell succeeded.
        let fusion_out = if do_fusion {
            match level_cells
                .iter()
                .flatten()
                .cloned()
                .collect::<std::result::Result<Vec<_>, _>>()
            {
                Ok(flat) => {
                    let per_space: Vec<Vec<CellOutcome>> = flat
                        .chunks(cfg.classifiers.len())
                        .map(|c| c.to_vec())
                        .collect();
                    run_fusion(
                        &cfg.feature_spaces,
                        &cfg.classifiers,
                        &space_data,
                        &per_space,
                        &truth,
                        cfg,
                        repeat,
                        li,
                    )
                    .map_err(|e| e.to_string())
                }
                Err(e) => Err(format!("fusion skipped, cell failed: {e}")),
            }
        } else if !cfg.fusion {
            Err("fusion disabled by config".to_string())
        } else {
            Err("fusion needs both psr and pca feature spaces".to_string())
        };
        cells.push(level_cells);
        fusion_rows.push(fusion_out);
    }
    Ok(RepeatResult { cells, fusion: fusion_rows })
}

/// Runs the full grid: `repeats` independent datasets, each noise level
/// injected, split, transformed per space, and every classifier kind fitted
/// as a paired (seed-only baseline, self-trained) pair, plus per-level
/// fusion of the two best streams. Cell failures are recorded per cell and
/// the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let repeat_results: Vec<Result<RepeatResult>> =
        (0..cfg.repeats).into_par_iter().map(|r| run_repeat(cfg, r)).collect();
    let mut repeats = Vec::with_capacity(cfg.repeats);
    for rr in repeat_results {
        repeats.push(rr?);
    }

    let mut cells = Vec::new();
    let mut errors = Vec::new();
    for (li, &level) in cfg.noise_levels.iter().enumerate() {
        for (si, &space) in cfg.feature_spaces.iter().enumerate() {
            for (ki, kind) in cfg.classifiers.iter().enumerate() {
                let seeds: Vec<u64> = (0..cfg.repeats)
                    .map(|r| cell_seed(cfg.master_seed, space, kind, r, li))
                    .collect();
                let outcomes: Vec<&std::result::Result<CellOutcome, String>> =
                    repeats.iter().map(|rr| &rr.cells[li][si][ki]).collect();
                let mut cell = CellResult {
                    space,
                    classifier: kind.clone(),
                    noise_level: level,
                    seeds,
                    baseline: None,
                    sampled: None,
                    error: None,
                };
                if let Some(e) = outcomes.iter().find_map(|o| o.as_ref().err()) {
                    let key = format!("{}+{} @ {}: {}", space.as_str(), kind, level, e);
                    errors.push(key.clone());
                    cell.error = Some(key);
                } else {
                    let ok: Vec<&CellOutcome> =
                        outcomes.iter().map(|o| o.as_ref().unwrap()).collect();
                    let bf: Vec<f64> = ok.iter().map(|o| o.baseline_f1).collect();
                    let ba: Vec<f64> = ok.iter().map(|o| o.baseline_acc).collect();
                    let sf: Vec<f64> = ok.iter().map(|o| o.sampled_f1).collect();
                    let sa: Vec<f64> = ok.iter().map(|o| o.sampled_acc).collect();
                    cell.baseline = Some(stats(&bf, &ba));
                    cell.sampled = Some(stats(&sf, &sa));
                }
                cells.push(cell);
            }
        }
    }

    let mut fusion = Vec::new();
    let mut single_stream = Vec::new();
    // A config that turns fusion off gets no fusion rows rather than rows
    // carrying a synthetic error.
    let fusion_levels = if cfg.fusion { cfg.noise_levels.len() } else { 0 };
    for (li, &level) in cfg.noise_levels.iter().take(fusion_levels).enumerate() {
        let outcomes: Vec<&std::result::Result<FusionOutcome, String>> =
            repeats.iter().map(|rr| &rr.fusion[li]).collect();
        if let Some(e) = outcomes.iter().find_map(|o| o.as_ref().err()) {
            let key = format!("fusion @ {level}: {e}");
            errors.push(key.clone());
            for mode in ["weighted", "meta"] {
                fusion.push(FusionRow {
                    mode: mode.into(),
                    noise_level: level,
                    mean_f1: 0.0,
                    std_f1: 0.0,
                    error: Some(key.clone()),
                });
            }
            single_stream.push(SingleStreamRow {
                noise_level: level,
                mean_f1: 0.0,
                std_f1: 0.0,
                chosen_psr: Vec::new(),
                chosen_pca: Vec::new(),
                error: Some(key),
            });
        } else {
            let ok: Vec<&FusionOutcome> = outcomes.iter().map(|o| o.as_ref().unwrap()).collect();
            let (wa_mean, wa_std) =
                mean_std(&ok.iter().map(|o| o.weighted_f1).collect::<Vec<_>>());
            let (meta_mean, meta_std) =
                mean_std(&ok.iter().map(|o| o.meta_f1).collect::<Vec<_>>());
            let (bs_mean, bs_std) =
                mean_std(&ok.iter().map(|o| o.best_single_f1).collect::<Vec<_>>());
            fusion.push(FusionRow {
                mode: "weighted".into(),
                noise_level: level,
                mean_f1: wa_mean,
                std_f1: wa_std,
                error: None,
            });
            fusion.push(FusionRow {
                mode: "meta".into(),
                noise_level: level,
                mean_f1: meta_mean,
                std_f1: meta_std,
                error: None,
            });
            single_stream.push(SingleStreamRow {
                noise_level: level,
                mean_f1: bs_mean,
                std_f1: bs_std,
                chosen_psr: ok.iter().map(|o| o.chosen_psr.clone()).collect(),
                chosen_pca: ok.iter().map(|o| o.chosen_pca.clone()).collect(),
                error: None,
            });
        }
    }

    Ok(ExperimentReport { config: cfg.clone(), cells, fusion, single_stream, errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub j: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Sweeps the per-cycle batch size J for one (space, kind, level) cell.
/// All seeds exclude J, so the J = default point reproduces the
/// run_experiment cell bit for bit.
pub fn j_sweep(
    cfg: &ExperimentConfig,
    j_values: &[usize],
    space: SpaceTag,
    kind: &str,
    noise: f64,
) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if j_values.is_empty() {
        return Err(Error::Config("j_values must be nonempty".into()));
    }
    if j_values.contains(&0) {
        return Err(Error::Config("batch size J must be at least 1".into()));
    }
    if !cfg.feature_spaces.contains(&space) {
        return Err(Error::Config(format!("space {} not in feature_spaces", space.as_str())));
    }
    if !cfg.classifiers.iter().any(|k| k == kind) {
        return Err(Error::Config(format!("classifier '{kind}' not in config")));
    }
    let li = cfg
        .noise_levels
        .iter()
        .position(|&l| l == noise)
        .ok_or_else(|| Error::Config(format!("noise level {noise} not in noise_levels")))?;

    // Per repeat: one generation/injection/split/transform, reused per J.
    let per_repeat: Vec<Result<Vec<f64>>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let gen_cfg = GenConfig {
                seed: seed::derive(cfg.master_seed, &["gen", &r.to_string()]),
                ..cfg.gen.clone()
            };
            let clean = prach::generate_dataset(&gen_cfg)?;
            let clean_labels = clean.labels();
            let noise_spec = NoiseSpec {
                fraction: noise,
                mode: cfg.noise_mode,
                seed: seed::derive(cfg.master_seed, &["inject", &r.to_string(), &li.to_string()]),
            };
            let noisy = noise::inject(&clean, &noise_spec)?;
            let (train_idx, test_idx) = stratified_indices(
                &noisy.labels(),
                cfg.split,
                seed::derive(cfg.master_seed, &["split", &r.to_string(), &li.to_string()]),
            )?;
            let train_ds = noisy.subset(&train_idx);
            let test_ds = noisy.subset(&test_idx);
            let truth: Vec<Label> = test_idx.iter().map(|&i| clean_labels[i]).collect();
            let data = transform_space(space, &train_ds, &test_ds, &cfg.psr, cfg.pca_components)?;
            let cs = cell_seed(cfg.master_seed, space, kind, r, li);
            let spec = cfg.spec_for(kind, seed::derive(cs, &["weights"]))?;
            j_values
                .iter()
                .map(|&j| {
                    let mut sampling_cfg = cfg.sampling;
                    sampling_cfg.j = j;
                    let out = run_cell(&data, &truth, &spec, cs, &sampling_cfg, false)?;
                    Ok(out.sampled_f1)
                })
                .collect()
        })
        .collect();
    let mut by_repeat = Vec::with_capacity(cfg.repeats);
    for r in per_repeat {
        by_repeat.push(r?);
    }
    Ok(j_values
        .iter()
        .enumerate()
        .map(|(ji, &j)| {
            let f1s: Vec<f64> = by_repeat.iter().map(|r| r[ji]).collect();
            let (mean_f1, std_f1) = mean_std(&f1s);
            SweepPoint { j, mean_f1, std_f1 }
        })
        .collect())
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<ExperimentReport> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad report JSON: {e}")))
    }

    /// One row per grid cell with both variants' statistics.
    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "space",
            "classifier",
            "noise_level",
            "baseline_mean_f1",
            "baseline_std_f1",
            "baseline_mean_accuracy",
            "baseline_std_accuracy",
            "sampled_mean_f1",
            "sampled_std_f1",
            "sampled_mean_accuracy",
            "sampled_std_accuracy",
            "error",
        ])?;
        let fmt = |v: f64| format!("{v:.6}");
        let opt = |s: &Option<CellStats>, f: fn(&CellStats) -> f64| match s {
            Some(st) => fmt(f(st)),
            None => String::new(),
        };
        for c in &self.cells {
            w.write_record([
                c.space.as_str().to_string(),
                c.classifier.clone(),
                fmt(c.noise_level),
                opt(&c.baseline, |s| s.mean_f1),
                opt(&c.baseline, |s| s.std_f1),
                opt(&c.baseline, |s| s.mean_accuracy),
                opt(&c.baseline, |s| s.std_accuracy),
                opt(&c.sampled, |s| s.mean_f1),
                opt(&c.sampled, |s| s.std_f1),
                opt(&c.sampled, |s| s.mean_accuracy),
                opt(&c.sampled, |s| s.std_accuracy),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    /// Fusion and best-single-stream rows.
    pub fn write_fusion_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mode", "noise_level", "mean_f1", "std_f1", "error"])?;
        let fmt = |v: f64| format!("{v:.6}");
        for f in &self.fusion {
            w.write_record([
                f.mode.clone(),
                fmt(f.noise_level),
                fmt(f.mean_f1),
                fmt(f.std_f1),
                f.error.clone().unwrap_or_default(),
            ])?;
        }
        for s in &self.single_stream {
            w.write_record([
                "best_single".to_string(),
                fmt(s.noise_level),
                fmt(s.mean_f1),
                fmt(s.std_f1),
                s.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }

    fn cell(&self, space: SpaceTag, kind: &str, level: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.space == space && c.classifier == kind && c.noise_level == level)
    }

    /// Human-readable grid: classifiers as rows, noise levels as columns.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let levels = &self.config.noise_levels;
        let header = |out: &mut String| {
            out.push_str("| stream |");
            for l in levels {
                out.push_str(&format!(" {:.0}% |", l * 100.0));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in levels {
                out.push_str("---|");
            }
            out.push('\n');
        };
        let variant = |out: &mut String, name: &str, pick: fn(&CellResult) -> Option<CellStats>| {
            out.push_str(&format!("## {name}\n\n"));
            header(out);
            for &space in &self.config.feature_spaces {
                for kind in &self.config.classifiers {
                    out.push_str(&format!("| {}+{} |", space.as_str(), kind));
                    for &l in levels {
                        match self.cell(space, kind, l).and_then(&pick) {
                            Some(s) => {
                                out.push_str(&format!(" {:.4} ({:.4}) |", s.mean_f1, s.std_f1))
                            }
                            None => out.push_str(" - |"),
                        }
                    }
                    out.push('\n');
                }
            }
            out.push('\n');
        };
        out.push_str(&format!(
            "# Detection F1 grid\n\n{} records, {} repeats, {} noise; mean (std) over repeats.\n\n",
            self.config.gen.n_records,
            self.config.repeats,
            self.config.noise_mode.as_str(),
        ));
        variant(&mut out, "Baseline (labeled seed only)", |c| c.baseline);
        variant(&mut out, "With informative-instance self-training", |c| c.sampled);
        out.push_str("## Fusion\n\n");
        out.push_str("| mode |");
        for l in levels {
            out.push_str(&format!(" {:.0}% |", l * 100.0));
        }
        out.push_str("\n|---|");
        for _ in levels {
            out.push_str("---|");
        }
        out.push('\n');
        for mode in ["weighted", "meta"] {
            out.push_str(&format!("| {mode} |"));
            for &l in levels {
                match self.fusion.iter().find(|f| f.mode == mode && f.noise_level == l) {
                    Some(f) if f.error.is_none() => {
                        out.push_str(&format!(" {:.4} ({:.4}) |", f.mean_f1, f.std_f1))
                    }
                    _ => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out.push_str("| best single |");
        for &l in levels {
            match self.single_stream.iter().find(|s| s.noise_level == l) {
                Some(s) if s.error.is_none() => {
                    out.push_str(&format!(" {:.4} ({:.4}) |", s.mean_f1, s.std_f1))
                }
                _ => out.push_str(" - |"),
            }
        }
        out.push('\n');
        if !self.errors.is_empty() {
            out.push_str("\n## Errors\n\n");
            for e in &self.errors {
                out.push_str(&format!("- {e}\n"));
            }
        }
        out
    }
}

/// Plot-ready sweep curve.
pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["j", "mean_f1", "std_f1"])?;
    for p in points {
        w.write_record([p.j.to_string(), format!("{:.6}", p.mean_f1), format!("{:.6}", p.std_f1)])?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}
