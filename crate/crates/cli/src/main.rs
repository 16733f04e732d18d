use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tangent_shield::harness::{self, selftest, ExperimentConfig, PolicySpec, Safety, Summary};
use tangent_shield::Error;

#[derive(Parser)]
#[command(
    name = "tangent-shield",
    version,
    about = "Safety-filtered air hockey experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded episodes.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PolicySpec>,
        #[arg(long)]
        safety: Option<Safety>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-step traj-<seed>.jsonl files.
        #[arg(long)]
        trajectories: bool,
    },
    /// Merge summary.json files into a comparison CSV.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error[{}]: {err}", err.tag());
    ExitCode::from(exit_code(&err))
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    policy: Option<PolicySpec>,
    safety: Option<Safety>,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trajectories: bool,
) -> ExitCode {
    let mut cfg = match config {
        Some(path) => match ExperimentConfig::from_file(&path) {
            Ok(cfg) => cfg,
            Err(e) => return fail(e),
        },
        None => ExperimentConfig::default(),
    };
    if let Some(p) = policy {
        cfg.policy = p;
    }
    if let Some(s) = safety {
        cfg.safety = s;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.trajectories |= trajectories;

    match harness::run_experiment(&cfg) {
        Ok(summary) => {
            println!(
                "{} safety={} episodes={} success_rate={} mean_max_violation={:.3e} p95_max_violation={:.3e} aborted={}",
                summary.condition,
                summary.safety,
                summary.episodes,
                summary.success_rate,
                summary.mean_max_violation,
                summary.p95_max_violation,
                summary.aborted_episodes
            );
            if summary.aborted_episodes > 0 {
                ExitCode::from(EXIT_RUNTIME)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(e),
    }
}

fn report(inputs: Vec<PathBuf>, out: PathBuf) -> ExitCode {
    let mut summaries = Vec::with_capacity(inputs.len());
    for path in inputs {
        let parsed = std::fs::read_to_string(&path)
            .map_err(Error::from)
            .and_then(|text| {
                serde_json::from_str::<Summary>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            });
        match parsed {
            Ok(s) => summaries.push(s),
            Err(e) => return fail(e),
        }
    }
    match harness::compare_report(&summaries).and_then(|csv| Ok(std::fs::write(&out, csv)?)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run {
            config,
            policy,
            safety,
            episodes,
            seed,
            out,
            trajectories,
        } => run(config, policy, safety, episodes, seed, out, trajectories),
        Command::Report { inputs, out } => report(inputs, out),
        Command::Selftest => {
            let checks = selftest::run_selftest();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
