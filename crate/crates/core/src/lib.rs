//! Synthetic PRACH preamble-detection benchmark.
//!
//! The pipeline: generate correlation-peak candidate features from
//! Zadoff-Chu preambles ([`prach`]), corrupt a fraction of the records
//! ([`noise`]), lift features into phase-space or PCA coordinates
//! ([`transform`]), train classifiers ([`classifiers`]) directly or through
//! informative-instance self-training ([`sampling`]), fuse the two feature
//! streams ([`fusion`]), and run the repeated evaluation grid ([`eval`]).

pub mod classifiers;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod noise;
pub mod prach;
pub mod sampling;
pub mod seed;
pub mod transform;

pub use classifiers::{ClassifierSpec, TrainedModel};
pub use data::{Dataset, FeatureMatrix, FeatureRecord, Label, SpaceTag};
pub use error::{Error, Result};
pub use eval::{run_experiment, ExperimentConfig, ExperimentReport};
pub use fusion::FusionModel;
pub use noise::{NoiseMode, NoiseSpec};
pub use prach::GenConfig;
pub use sampling::{self_train, SamplingConfig, SelfTrainResult};
pub use transform::{PcaModel, PsrConfig};
