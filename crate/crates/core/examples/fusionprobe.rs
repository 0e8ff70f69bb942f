//! Per-repeat fusion diagnostics at one noise level: reproduces the harness
//! seed-for-seed and prints stream rankings, weights, meta internals, and
//! the selection's view of every candidate. Scratch tool.

use prachdet::classifiers::label_from_posterior;
use prachdet::eval::{stratified_indices, ExperimentConfig};
use prachdet::fusion::{fit_meta_nb, fuse_predict, FusionModel};
use prachdet::transform::{pca_fit, pca_project, psr_features};
use prachdet::{eval, noise, prach, sampling, seed, FeatureMatrix, GenConfig, Label, NoiseSpec, SpaceTag};

fn f1(t: &[Label], p: &[Label]) -> f64 {
    eval::f1_score(t, p)
}

fn oof_stream(
    x_train: &FeatureMatrix,
    folds: &(Vec<usize>, Vec<usize>),
    spec: &prachdet::ClassifierSpec,
    cs: u64,
    cfg: &ExperimentConfig,
) -> (Vec<f64>, Vec<Label>) {
    let train_labels = &x_train.labels;
    let mut oof_peak = vec![0.0; train_labels.len()];
    let mut oof_pred = vec![Label::FalsePeak; train_labels.len()];
    let views = [&folds.0, &folds.1];
    for fi in 0..2 {
        let va = views[fi];
        let tr = views[1 - fi];
        let tr_labels: Vec<Label> = tr.iter().map(|&i| train_labels[i]).collect();
        let (s0, sp) = stratified_indices(
            &tr_labels,
            cfg.sampling.initial_fraction,
            seed::derive(cs, &["fold", &fi.to_string(), "init"]),
        )
        .unwrap();
        let seed_rows: Vec<usize> = s0.iter().map(|&j| tr[j]).collect();
        let pool_rows: Vec<usize> = sp.iter().map(|&j| tr[j]).collect();
        let x_seed = x_train.subset(&seed_rows);
        let x_pool = x_train.subset(&pool_rows);
        let fold_spec = spec.with_seed(seed::derive(cs, &["fold", &fi.to_string()]));
        let mut st_cfg = cfg.sampling;
        st_cfg.seed = seed::derive(cs, &["fold", &fi.to_string(), "sampling"]);
        let st = sampling::self_train(&x_seed, &x_pool, &fold_spec, &st_cfg).unwrap();
        let x_va = x_train.subset(va);
        let post = st.model.posterior(&x_va).unwrap();
        for (j, p) in va.iter().zip(&post) {
            oof_peak[*j] = p[1];
            oof_pred[*j] = label_from_posterior(p);
        }
    }
    (oof_peak, oof_pred)
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let li: usize = args.first().and_then(|v| v.parse().ok()).unwrap_or(2);
    let spread: f64 = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(6.0);
    let repeats: usize = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(5);
    let mut cfg = ExperimentConfig::default();
    cfg.gen.snr_spread_db = spread;
    let level = cfg.noise_levels[li];
    println!("level {level} (index {li}), spread {spread}");
    let mut sums = [0.0f64; 3];

    for r in 0..repeats {
        let gen_cfg = GenConfig {
            seed: seed::derive(cfg.master_seed, &["gen", &r.to_string()]),
            ..cfg.gen.clone()
        };
        let clean = prach::generate_dataset(&gen_cfg).unwrap();
        let clean_labels = clean.labels();
        let noisy = noise::inject(
            &clean,
            &NoiseSpec {
                fraction: level,
                mode: cfg.noise_mode,
                seed: seed::derive(cfg.master_seed, &["inject", &r.to_string(), &li.to_string()]),
            },
        )
        .unwrap();
        let (train_idx, test_idx) = stratified_indices(
            &noisy.labels(),
            cfg.split,
            seed::derive(cfg.master_seed, &["split", &r.to_string(), &li.to_string()]),
        )
        .unwrap();
        let train_ds = noisy.subset(&train_idx);
        let test_ds = noisy.subset(&test_idx);
        let truth: Vec<Label> = test_idx.iter().map(|&i| clean_labels[i]).collect();
        let train_truth: Vec<Label> = train_idx.iter().map(|&i| clean_labels[i]).collect();

        let spaces = [SpaceTag::Psr, SpaceTag::Pca];
        let mut mats: Vec<(FeatureMatrix, FeatureMatrix)> = Vec::new();
        for s in spaces {
            match s {
                SpaceTag::Psr => mats.push((
                    psr_features(&train_ds, &cfg.psr).unwrap(),
                    psr_features(&test_ds, &cfg.psr).unwrap(),
                )),
                SpaceTag::Pca => {
                    let m = pca_fit(&train_ds.to_matrix(), cfg.pca_components).unwrap();
                    mats.push((
                        pca_project(&m, &train_ds.to_matrix()).unwrap(),
                        pca_project(&m, &test_ds.to_matrix()).unwrap(),
                    ));
                }
                SpaceTag::Raw => unreachable!(),
            }
        }

        // Per space and kind: OOF streams plus the deployed self-trained cell.
        let kinds = cfg.classifiers.clone();
        let mut oof: Vec<Vec<(Vec<f64>, Vec<Label>)>> = Vec::new();
        let mut deployed: Vec<Vec<(Vec<Label>, Vec<[f64; 2]>, f64)>> = Vec::new();
        println!("repeat {r}:");
        for (slot, &space) in spaces.iter().enumerate() {
            let (x_train, x_test) = &mats[slot];
            let folds = stratified_indices(
                &x_train.labels,
                0.5,
                seed::derive(
                    cfg.master_seed,
                    &["oof", &r.to_string(), &li.to_string(), space.as_str()],
                ),
            )
            .unwrap();
            let mut streams = Vec::new();
            let mut cells = Vec::new();
            for kind in &kinds {
                let cs = seed::derive(
                    cfg.master_seed,
                    &["cell", space.as_str(), kind, &r.to_string(), &li.to_string()],
                );
                let spec = cfg.spec_for(kind, seed::derive(cs, &["weights"])).unwrap();
                let (peak, pred) = oof_stream(x_train, &folds, &spec, cs, &cfg);
                let noisy_f1 = f1(&x_train.labels, &pred);
                let true_f1 = f1(&train_truth, &pred);
                streams.push((peak, pred));

                let (s0, sp) = stratified_indices(
                    &x_train.labels,
                    cfg.sampling.initial_fraction,
                    seed::derive(cs, &["initial"]),
                )
                .unwrap();
                let x_seed = x_train.subset(&s0);
                let x_pool = x_train.subset(&sp);
                let mut st_cfg = cfg.sampling;
                st_cfg.seed = seed::derive(cs, &["sampling"]);
                let st = sampling::self_train(&x_seed, &x_pool, &spec, &st_cfg).unwrap();
                let train_pred = st.model.predict(x_train).unwrap();
                let post = st.model.posterior(x_test).unwrap();
                let pred_test: Vec<Label> = post.iter().map(label_from_posterior).collect();
                let test_f1 = f1(&truth, &pred_test);
                println!(
                    "  {} {kind}: oof-vs-noisy {noisy_f1:.4} oof-vs-true {true_f1:.4} deployed-test {test_f1:.4}",
                    space.as_str()
                );
                cells.push((train_pred, post, test_f1));
            }
            oof.push(streams);
            deployed.push(cells);
        }

        // Two-pass selection mirroring the harness.
        let train_labels = &mats[0].0.labels;
        let f1_on = |pred: &[Label], rows: &[usize]| {
            let t: Vec<Label> = rows.iter().map(|&i| train_labels[i]).collect();
            let p: Vec<Label> = rows.iter().map(|&i| pred[i]).collect();
            f1(&t, &p)
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
        let every_row: Vec<usize> = (0..train_labels.len()).collect();
        let mut chosen = [0usize; 2];
        for slot in 0..2 {
            let mut best = (0usize, -1.0f64);
            for (ki, (_, pred)) in oof[slot].iter().enumerate() {
                let s = f1_on(pred, &every_row);
                if s > best.1 {
                    best = (ki, s);
                }
            }
            chosen[slot] = best.0;
        }
        let pass1 = chosen;
        let keep1 = keep_rows(&oof[0][chosen[0]].1, &oof[1][chosen[1]].1);
        if two_class(&keep1) {
            for slot in 0..2 {
                let mut best = (0usize, (-1.0f64, -1.0f64));
                for ki in 0..kinds.len() {
                    let key = (f1_on(&deployed[slot][ki].0, &keep1), f1_on(&oof[slot][ki].1, &keep1));
                    if key.0 > best.1 .0 || (key.0 == best.1 .0 && key.1 > best.1 .1) {
                        best = (ki, key);
                    }
                }
                chosen[slot] = best.0;
            }
        }
        let mut keep = keep_rows(&oof[0][chosen[0]].1, &oof[1][chosen[1]].1);
        if !two_class(&keep) {
            keep = every_row;
        }
        let kept_labels: Vec<Label> = keep.iter().map(|&i| train_labels[i]).collect();
        let kept_truth: Vec<Label> = keep.iter().map(|&i| train_truth[i]).collect();
        let label_noise_in_kept =
            kept_labels.iter().zip(&kept_truth).filter(|(a, b)| a != b).count();
        println!(
            "  filter: pass1 kept {}/{}, final kept {}/{}, {} still-flipped, reselect {:?} -> {:?}",
            keep1.len(),
            train_labels.len(),
            keep.len(),
            train_labels.len(),
            label_noise_in_kept,
            [&kinds[pass1[0]], &kinds[pass1[1]]],
            [&kinds[chosen[0]], &kinds[chosen[1]]],
        );
        for (slot, &space) in spaces.iter().enumerate() {
            for (ki, kind) in kinds.iter().enumerate() {
                let d = f1_on(&deployed[slot][ki].0, &keep);
                let o = f1_on(&oof[slot][ki].1, &keep);
                let flag = if ki == chosen[slot] { " <- chosen" } else { "" };
                println!("  {} {kind}: deployed-kept {d:.4} oof-kept {o:.4}{flag}", space.as_str());
            }
        }

        let sel_f1 = [
            f1_on(&deployed[0][chosen[0]].0, &keep),
            f1_on(&deployed[1][chosen[1]].0, &keep),
        ];
        let weighted = FusionModel::weighted((sel_f1[0], sel_f1[1])).unwrap();
        let kept_feats: Vec<[f64; 2]> = keep
            .iter()
            .map(|&i| [oof[0][chosen[0]].0[i], oof[1][chosen[1]].0[i]])
            .collect();
        let meta = fit_meta_nb(&kept_feats, &kept_labels).unwrap();
        let test_post = [&deployed[0][chosen[0]].1, &deployed[1][chosen[1]].1];
        let mut wa_pred = Vec::new();
        let mut meta_pred = Vec::new();
        for i in 0..truth.len() {
            wa_pred.push(fuse_predict(&weighted, &test_post[0][i], &test_post[1][i]).unwrap());
            meta_pred.push(fuse_predict(&meta, &test_post[0][i], &test_post[1][i]).unwrap());
        }
        let sampled_f1 = [deployed[0][chosen[0]].2, deployed[1][chosen[1]].2];
        let (wa, mf, bs) = (
            f1(&truth, &wa_pred),
            f1(&truth, &meta_pred),
            sampled_f1[0].max(sampled_f1[1]),
        );
        println!(
            "  chosen {}+{} sampled ({:.4}, {:.4}) weights ({:.3}, {:.3})",
            kinds[chosen[0]],
            kinds[chosen[1]],
            sampled_f1[0],
            sampled_f1[1],
            sel_f1[0] / (sel_f1[0] + sel_f1[1]),
            sel_f1[1] / (sel_f1[0] + sel_f1[1])
        );
        println!("  wa {wa:.4} meta {mf:.4} best_single {bs:.4}");
        sums[0] += wa;
        sums[1] += mf;
        sums[2] += bs;
        if let FusionModel::MetaNb { model } = &meta {
            println!("  meta nb: {}", serde_json::to_string(&model).unwrap());
        }
    }
    let n = repeats as f64;
    println!(
        "means: wa {:.4} meta {:.4} best_single {:.4}",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n
    );
}
