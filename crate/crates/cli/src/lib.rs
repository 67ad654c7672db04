//! The `dualscope` command line: synthetic data, training, cross-validation,
//! the kernel-size ablation and subgroup reports. Every command is a pure
//! function of its config and seeds.

pub mod cli;
pub mod commands;
pub mod config;
pub mod history;

pub use commands::{
    cmd_ablate, cmd_crossval, cmd_report, cmd_synth, cmd_train, AblationOutcome, CrossvalOutcome,
    ReportOutcome, SynthOutcome, TrainOutcome, ABLATION_KERNELS,
};
pub use config::{CvConfig, DatasetConfig, ExperimentConfig, Preset};
