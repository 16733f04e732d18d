//! Episode runner, batch experiments and report generation.

mod config;
mod episode;
mod experiment;
mod report;
pub mod selftest;

pub use config::{ExperimentConfig, PolicySpec, Safety, WorldConfig};
pub use episode::{run_episode, EpisodeOutcome, EpisodeResult, EpisodeSetup, StepRecord};
pub use experiment::{
    build_policy, run_experiment, run_experiment_episodes, Summary, EPISODES_CSV_HEADER,
};
pub use report::{compare_report, parse_report, ReportRow, REPORT_HEADER};
