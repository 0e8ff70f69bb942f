//! Grid probe for tuning generator and harness defaults. Prints the full
//! baseline/sampled table plus the derived quantities the defaults are
//! chosen against (clean minima, per-level drops, psr+elm gain, fusion
//! ordering). Scratch tool, not part of the library surface.

use std::time::Instant;

use prachdet::eval::{run_experiment, ExperimentConfig};
use prachdet::SpaceTag;

fn flag<T: std::str::FromStr>(args: &[String], name: &str) -> Option<T> {
    args.iter()
        .position(|a| a == name)
        .and_then(|i| args.get(i + 1))
        .and_then(|v| v.parse().ok())
}

fn flag_list<T: std::str::FromStr>(args: &[String], name: &str) -> Option<Vec<T>> {
    args.iter().position(|a| a == name).and_then(|i| args.get(i + 1)).map(|v| {
        v.split(',').filter_map(|p| p.parse().ok()).collect()
    })
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    if let Some(v) = flag(&args, "--spread") {
        cfg.gen.snr_spread_db = v;
    }
    if let Some(v) = flag(&args, "--snr") {
        cfg.gen.snr_db = v;
    }
    if let Some(v) = flag(&args, "--n") {
        cfg.gen.n_records = v;
    }
    if let Some(v) = flag(&args, "--repeats") {
        cfg.repeats = v;
    }
    if let Some(v) = flag_list(&args, "--levels") {
        cfg.noise_levels = v;
    }
    if let Some(v) = flag_list::<String>(&args, "--kinds") {
        cfg.classifiers = v;
    }
    if let Some(v) = flag(&args, "--elm-hidden") {
        cfg.elm_hidden = v;
    }
    if let Some(v) = flag(&args, "--elm-lambda") {
        cfg.elm_lambda = v;
    }
    if let Some(v) = flag(&args, "--knn-k") {
        cfg.knn_k = v;
    }
    if let Some(v) = flag(&args, "--tree-depth") {
        cfg.tree_max_depth = Some(v);
    }
    if let Some(v) = flag(&args, "--master") {
        cfg.master_seed = v;
    }
    if let Some(v) = flag(&args, "--initial") {
        cfg.sampling.initial_fraction = v;
    }
    if args.iter().any(|a| a == "--psr-only") {
        cfg.feature_spaces = vec![SpaceTag::Psr];
    }
    println!(
        "n={} repeats={} snr={} spread={} elm={}/{} knn_k={} tree_depth={:?} initial={} levels={:?}",
        cfg.gen.n_records,
        cfg.repeats,
        cfg.gen.snr_db,
        cfg.gen.snr_spread_db,
        cfg.elm_hidden,
        cfg.elm_lambda,
        cfg.knn_k,
        cfg.tree_max_depth,
        cfg.sampling.initial_fraction,
        cfg.noise_levels,
    );
    let t0 = Instant::now();
    let report = run_experiment(&cfg).expect("run failed");
    let elapsed = t0.elapsed().as_secs_f64();
    println!("wall {elapsed:.1}s");

    println!("\ncell                 {}", cfg
        .noise_levels
        .iter()
        .map(|l| format!("{:>17}", format!("@{l}")))
        .collect::<String>());
    for space in &cfg.feature_spaces {
        for kind in &cfg.classifiers {
            let mut line = format!("{:<20}", format!("{}+{}", space.as_str(), kind));
            for level in &cfg.noise_levels {
                let cell = report
                    .cells
                    .iter()
                    .find(|c| {
                        c.space == *space && &c.classifier == kind && c.noise_level == *level
                    })
                    .unwrap();
                match (&cell.baseline, &cell.sampled) {
                    (Some(b), Some(s)) => {
                        line.push_str(&format!(" {:.4}/{:.4} ", b.mean_f1, s.mean_f1))
                    }
                    _ => line.push_str(&format!(" ERR {} ", cell.error.as_deref().unwrap_or(""))),
                }
            }
            println!("{line}");
        }
    }

    // Grid means per level (baseline and sampled).
    println!();
    for level in &cfg.noise_levels {
        let cells: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.noise_level == *level && c.baseline.is_some())
            .collect();
        let nb = cells.len() as f64;
        let gb = cells.iter().map(|c| c.baseline.as_ref().unwrap().mean_f1).sum::<f64>() / nb;
        let gs = cells.iter().map(|c| c.sampled.as_ref().unwrap().mean_f1).sum::<f64>() / nb;
        let best = cells
            .iter()
            .map(|c| c.sampled.as_ref().unwrap().mean_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        println!("grid @{level}: baseline {gb:.4} sampled {gs:.4} best_cell_sampled {best:.4}");
    }

    println!();
    for row in &report.fusion {
        println!(
            "fusion {} @{}: {:.4} (std {:.4}){}",
            row.mode,
            row.noise_level,
            row.mean_f1,
            row.std_f1,
            row.error.as_deref().map(|e| format!(" ERR {e}")).unwrap_or_default()
        );
    }
    for row in &report.single_stream {
        println!(
            "single @{}: {:.4} chosen psr={:?} pca={:?}{}",
            row.noise_level,
            row.mean_f1,
            row.chosen_psr,
            row.chosen_pca,
            row.error.as_deref().map(|e| format!(" ERR {e}")).unwrap_or_default()
        );
    }

    // Derived probe quantities.
    println!();
    let find = |space: SpaceTag, kind: &str, level: f64| {
        report
            .cells
            .iter()
            .find(|c| c.space == space && c.classifier == kind && c.noise_level == level)
    };
    if let Some(level0) = cfg.noise_levels.first().copied() {
        let mut worst_b: (f64, String) = (f64::INFINITY, String::new());
        let mut worst_s: (f64, String) = (f64::INFINITY, String::new());
        for c in report.cells.iter().filter(|c| c.noise_level == level0) {
            if let (Some(b), Some(s)) = (&c.baseline, &c.sampled) {
                let name = format!("{}+{}", c.space.as_str(), c.classifier);
                if b.mean_f1 < worst_b.0 {
                    worst_b = (b.mean_f1, name.clone());
                }
                if s.mean_f1 < worst_s.0 {
                    worst_s = (s.mean_f1, name);
                }
            }
        }
        println!("clean minima: baseline {:.4} ({}) sampled {:.4} ({})", worst_b.0, worst_b.1, worst_s.0, worst_s.1);
    }
    if cfg.classifiers.iter().any(|k| k == "elm") && cfg.feature_spaces.contains(&SpaceTag::Psr) {
        for level in &cfg.noise_levels {
            if let Some(c) = find(SpaceTag::Psr, "elm", *level) {
                if let (Some(b), Some(s)) = (&c.baseline, &c.sampled) {
                    println!(
                        "psr+elm @{level}: baseline {:.4}±{:.4} sampled {:.4}±{:.4} gain {:+.4}",
                        b.mean_f1, b.std_f1, s.mean_f1, s.std_f1, s.mean_f1 - b.mean_f1
                    );
                }
            }
        }
    }
    if let Some(path) = flag::<String>(&args, "--json") {
        std::fs::write(&path, report.to_json().unwrap()).unwrap();
        println!("report written to {path}");
    }
}
