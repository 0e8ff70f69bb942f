//! Thin command-line driver over the prachdet library. Each subcommand runs
//! one pipeline stage and writes its outputs plus `manifest.json` echoing the
//! fully resolved configuration, so a run can be replayed from the manifest
//! alone. All randomness flows from explicit seed fields; nothing is
//! wall-clock seeded.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use prachdet::eval::{j_sweep, write_sweep_csv};
use prachdet::transform::{pca_fit, pca_project, psr_features};
use prachdet::{
    classifiers, noise, prach, ClassifierSpec, Dataset, Error, ExperimentConfig,
    ExperimentReport, GenConfig, NoiseMode, NoiseSpec, PcaModel, PsrConfig, Result, SpaceTag,
};

#[derive(Parser)]
#[command(name = "prachdet", version, about = "Synthetic PRACH preamble-detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (dataset.csv plus provenance sidecar).
    Gen {
        /// Generator config as JSON; library defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Dotted-path config override, e.g. --set n_records=500 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Corrupt a dataset with feature AWGN or label flips.
    Inject {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fraction of records to corrupt, in [0, 1].
        #[arg(long)]
        fraction: f64,
        /// awgn | flip
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Lift a dataset into PSR or PCA coordinates (features.csv).
    Transform {
        #[arg(long = "in")]
        input: PathBuf,
        /// psr | pca
        #[arg(long)]
        space: String,
        /// PSR delay-embedding dimension.
        #[arg(long, default_value_t = 7)]
        embed_dim: usize,
        /// PSR delay lag in rows.
        #[arg(long, default_value_t = 1)]
        time_lag: usize,
        /// PCA output dimensions (fit mode).
        #[arg(long, default_value_t = 2)]
        components: usize,
        /// Apply a stored PCA model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit one classifier on a feature CSV (model.json).
    Train {
        /// features.csv from `transform` (or any matrix CSV ending in a label column).
        #[arg(long = "in")]
        input: PathBuf,
        /// tree | knn | elm | nb
        #[arg(long)]
        kind: String,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_leaf: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-9)]
        variance_floor: f64,
        /// Hidden-weight seed (ELM only).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the repeated evaluation grid (report.json, CSV tables, markdown).
    Eval {
        /// Experiment config as JSON; library defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Cap worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Sweep the per-cycle batch size J for one grid cell (sweep.csv).
    SweepJ {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated J values.
        #[arg(long, default_value = "5,10,20,50,100,200")]
        j: String,
        /// psr | pca
        #[arg(long, default_value = "psr")]
        space: String,
        #[arg(long, default_value = "elm")]
        kind: String,
        /// Noise level; must be one of the config's noise_levels.
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-render a stored report.json as CSV tables or markdown.
    Report {
        /// report.json, or a directory containing one.
        #[arg(long = "in")]
        input: PathBuf,
        /// csv | md
        #[arg(long)]
        format: String,
        /// Output directory (default: current directory).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Parses `KEY=VALUE` and sets the dotted path KEY in `root`, creating
/// intermediate objects. VALUE parses as JSON when possible, else a string.
fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not KEY=VALUE")))?;
    let leaf: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let (parents, last) = {
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().filter(|p| !p.is_empty());
        (parts, last)
    };
    let Some(last) = last else {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    };
    let mut node = root;
    for part in parents {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path `{path}` crosses a non-object")))?;
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override path `{path}` crosses a non-object")))?
        .insert(last.to_string(), leaf);
    Ok(())
}

/// Loads a JSON config (or the type's defaults), applies overrides, and
/// returns the typed config alongside its fully resolved JSON echo.
fn load_config<T>(path: Option<&Path>, overrides: &[String]) -> Result<(T, Value)>
where
    T: serde::de::DeserializeOwned + Serialize + Default,
{
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(T::default())
            .map_err(|e| Error::Config(e.to_string()))?,
    };
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let typed: T =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    let resolved = serde_json::to_value(&typed).map_err(|e| Error::Config(e.to_string()))?;
    Ok((typed, resolved))
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn parse_space(s: &str) -> Result<SpaceTag> {
    match s {
        "raw" => Ok(SpaceTag::Raw),
        "psr" => Ok(SpaceTag::Psr),
        "pca" => Ok(SpaceTag::Pca),
        other => Err(Error::Config(format!("unknown feature space `{other}`"))),
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    // Ignores the already-built error: the pool is process-global.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { config, out, set } => {
            let (cfg, resolved): (GenConfig, _) = load_config(config.as_deref(), &set)?;
            let dataset = prach::generate_dataset(&cfg)?;
            std::fs::create_dir_all(&out)?;
            dataset.write_with_sidecar(&out.join("dataset.csv"))?;
            write_manifest(
                &out,
                &Manifest {
                    command: "gen".into(),
                    config: resolved,
                    inputs: vec![],
                    outputs: vec!["dataset.csv".into(), "dataset.meta.json".into()],
                },
            )
        }
        Command::Inject { input, fraction, mode, seed, out } => {
            let dataset = Dataset::read_csv_path(&input)?;
            let spec = NoiseSpec { fraction, mode: NoiseMode::parse(&mode)?, seed };
            let noisy = noise::inject(&dataset, &spec)?;
            std::fs::create_dir_all(&out)?;
            noisy.write_with_sidecar(&out.join("injected.csv"))?;
            write_manifest(
                &out,
                &Manifest {
                    command: "inject".into(),
                    config: serde_json::to_value(&spec)
                        .map_err(|e| Error::Config(e.to_string()))?,
                    inputs: vec![input.display().to_string()],
                    outputs: vec!["injected.csv".into(), "injected.meta.json".into()],
                },
            )
        }
        Command::Transform { input, space, embed_dim, time_lag, components, model, out } => {
            let dataset = Dataset::read_csv_path(&input)?;
            std::fs::create_dir_all(&out)?;
            let mut outputs = vec!["features.csv".to_string()];
            let features = match space.as_str() {
                "psr" => {
                    let cfg = PsrConfig { embed_dim, time_lag };
                    psr_features(&dataset, &cfg)?
                }
                "pca" => {
                    let base = dataset.to_matrix();
                    let pca = match &model {
                        Some(p) => PcaModel::load(p)?,
                        None => {
                            let fitted = pca_fit(&base, components)?;
                            fitted.save(&out.join("pca.json"))?;
                            outputs.push("pca.json".into());
                            fitted
                        }
                    };
                    pca_project(&pca, &base)?
                }
                other => {
                    return Err(Error::Config(format!("unknown transform space `{other}`")))
                }
            };
            let file = std::fs::File::create(out.join("features.csv"))?;
            features.write_csv(std::io::BufWriter::new(file))?;
            write_manifest(
                &out,
                &Manifest {
                    command: "transform".into(),
                    config: serde_json::json!({
                        "space": space,
                        "embed_dim": embed_dim,
                        "time_lag": time_lag,
                        "components": components,
                        "model": model.as_ref().map(|p| p.display().to_string()),
                    }),
                    inputs: vec![input.display().to_string()],
                    outputs,
                },
            )
        }
        Command::Train {
            input,
            kind,
            max_depth,
            min_leaf,
            k,
            hidden,
            lambda,
            variance_floor,
            seed,
            out,
        } => {
            let file = std::fs::File::open(&input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            let matrix =
                prachdet::FeatureMatrix::read_csv(std::io::BufReader::new(file), SpaceTag::Raw)?;
            let spec = match kind.as_str() {
                "tree" => ClassifierSpec::DecisionTree { max_depth, min_leaf },
                "knn" => ClassifierSpec::knn(k),
                "elm" => ClassifierSpec::elm(hidden, lambda, seed),
                "nb" => ClassifierSpec::GaussianNb { variance_floor },
                other => return Err(Error::Config(format!("unknown classifier `{other}`"))),
            };
            let labels = matrix.labels.clone();
            let model = classifiers::fit(&spec, &matrix, &labels)?;
            std::fs::create_dir_all(&out)?;
            model.save(&out.join("model.json"))?;
            write_manifest(
                &out,
                &Manifest {
                    command: "train".into(),
                    config: serde_json::to_value(&spec)
                        .map_err(|e| Error::Config(e.to_string()))?,
                    inputs: vec![input.display().to_string()],
                    outputs: vec!["model.json".into()],
                },
            )
        }
        Command::Eval { config, out, jobs, set } => {
            set_jobs(jobs)?;
            let (cfg, resolved): (ExperimentConfig, _) = load_config(config.as_deref(), &set)?;
            let report = prachdet::run_experiment(&cfg)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;
            report.write_cells_csv(&out.join("cells.csv"))?;
            report.write_fusion_csv(&out.join("fusion.csv"))?;
            std::fs::write(out.join("report.md"), report.to_markdown())?;
            write_manifest(
                &out,
                &Manifest {
                    command: "eval".into(),
                    config: resolved,
                    inputs: vec![],
                    outputs: vec![
                        "report.json".into(),
                        "cells.csv".into(),
                        "fusion.csv".into(),
                        "report.md".into(),
                    ],
                },
            )
        }
        Command::SweepJ { config, j, space, kind, noise, out, jobs, set } => {
            set_jobs(jobs)?;
            let (cfg, resolved): (ExperimentConfig, _) = load_config(config.as_deref(), &set)?;
            let j_values = j
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("bad J value `{p}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let space_tag = parse_space(&space)?;
            let points = j_sweep(&cfg, &j_values, space_tag, &kind, noise)?;
            std::fs::create_dir_all(&out)?;
            write_sweep_csv(&points, &out.join("sweep.csv"))?;
            let mut config_echo = resolved;
            if let Some(map) = config_echo.as_object_mut() {
                map.insert("sweep_j".into(), serde_json::json!(j_values));
                map.insert("sweep_space".into(), Value::String(space));
                map.insert("sweep_kind".into(), Value::String(kind));
                map.insert("sweep_noise".into(), serde_json::json!(noise));
            }
            write_manifest(
                &out,
                &Manifest {
                    command: "sweep-j".into(),
                    config: config_echo,
                    inputs: vec![],
                    outputs: vec!["sweep.csv".into()],
                },
            )
        }
        Command::Report { input, format, out } => {
            let path = if input.is_dir() { input.join("report.json") } else { input.clone() };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let report = ExperimentReport::from_json(&text)?;
            std::fs::create_dir_all(&out)?;
            let outputs: Vec<String> = match format.as_str() {
                "csv" => {
                    report.write_cells_csv(&out.join("cells.csv"))?;
                    report.write_fusion_csv(&out.join("fusion.csv"))?;
                    vec!["cells.csv".into(), "fusion.csv".into()]
                }
                "md" => {
                    std::fs::write(out.join("report.md"), report.to_markdown())?;
                    vec!["report.md".into()]
                }
                other => return Err(Error::Config(format!("unknown format `{other}`"))),
            };
            write_manifest(
                &out,
                &Manifest {
                    command: "report".into(),
                    config: serde_json::json!({ "format": format }),
                    inputs: vec![path.display().to_string()],
                    outputs,
                },
            )
        }
    }
}
