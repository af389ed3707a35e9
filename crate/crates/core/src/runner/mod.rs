//! Configuration, training loop and experiment presets.

mod config;
mod experiment;
mod train;

pub use config::{CovarianceSection, ExperimentConfig, ExperimentKind, LrSchedule, ModelSection, PropSection};
pub use experiment::{run_experiment, ExperimentManifest, RunStatus};
pub use train::{preset_policy, train, train_with, EvalSnapshot, RunManifest, Sgd, TrainOutcome, TrainSetup};
