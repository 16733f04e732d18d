use std::fs::{self, File};
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PolicySpec, Safety};
use super::episode::{run_episode, EpisodeOutcome, EpisodeResult, EpisodeSetup};
use crate::dynamics::make_velocity_integrator;
use crate::policies::{
    AdversarialPolicy, Policy, RandomPolicy, RemotePolicy, ScriptedExpert, ZeroPolicy,
};
use crate::sim::{default_constraints, reset_episode};
use crate::{Result, SafetyFilter};

pub const EPISODES_CSV_HEADER: &str =
    "seed,steps,success,max_violation,clipped_steps,protocol_error";

/// Aggregate written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub condition: String,
    pub policy: String,
    pub safety: Safety,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_max_violation: f64,
    /// Nearest-rank 95th percentile.
    pub p95_max_violation: f64,
    /// Fraction of episodes whose max violation exceeds the filter tolerance.
    pub violation_rate: f64,
    pub aborted_episodes: usize,
    pub config_hash: String,
}

impl Summary {
    pub fn from_results(cfg: &ExperimentConfig, results: &[EpisodeResult]) -> Self {
        let n = results.len();
        let nf = n.max(1) as f64;
        let mut viol: Vec<f64> = results.iter().map(|r| r.max_violation).collect();
        viol.sort_by(f64::total_cmp);
        let p95 = if n == 0 {
            0.0
        } else {
            let rank = (0.95 * n as f64).ceil() as usize;
            viol[rank.clamp(1, n) - 1]
        };
        Summary {
            condition: cfg.condition_label(),
            policy: cfg.policy.to_string(),
            safety: cfg.safety,
            episodes: n,
            success_rate: results.iter().filter(|r| r.success).count() as f64 / nf,
            mean_max_violation: viol.iter().sum::<f64>() / nf,
            p95_max_violation: p95,
            violation_rate: results
                .iter()
                .filter(|r| r.max_violation > cfg.filter.violation_tolerance)
                .count() as f64
                / nf,
            aborted_episodes: results
                .iter()
                .filter(|r| r.protocol_error.is_some())
                .count(),
            config_hash: cfg.hash(),
        }
    }
}

pub fn build_policy(cfg: &ExperimentConfig) -> Result<Box<dyn Policy<f64>>> {
    Ok(match &cfg.policy {
        PolicySpec::Scripted => Box::new(ScriptedExpert::new(
            cfg.world.table.clone(),
            cfg.expert.clone(),
        )),
        PolicySpec::Random => Box::new(RandomPolicy::new(cfg.v_ee_max)),
        PolicySpec::Adversarial => Box::new(AdversarialPolicy::new(
            cfg.world.table.clone(),
            cfg.v_ee_max,
        )),
        PolicySpec::Zero => Box::new(ZeroPolicy),
        PolicySpec::Remote(addr) => Box::new(RemotePolicy::connect(addr)?),
    })
}

fn setup_for(cfg: &ExperimentConfig, seed: u64) -> Result<EpisodeSetup<f64>> {
    let arm = cfg.world.arm.clone();
    let table = cfg.world.table.clone();
    Ok(EpisodeSetup {
        constraints: default_constraints(&arm, &table)?,
        plant: make_velocity_integrator(3, arm.qd_max)?,
        steps: cfg.episode_config(seed).steps(),
        dt: cfg.dt,
        ik_damping: cfg.ik_damping,
        arm,
        table,
        seed,
    })
}

fn one_episode(
    cfg: &ExperimentConfig,
    seed: u64,
    policy: &mut dyn Policy<f64>,
    record: bool,
) -> Result<EpisodeOutcome<f64>> {
    let setup = setup_for(cfg, seed)?;
    let world0 = reset_episode(&cfg.episode_config(seed), &setup.arm, &setup.table)?;
    let mut filter = match cfg.safety {
        Safety::On => Some(SafetyFilter::new(
            setup.plant.clone(),
            setup.constraints.clone(),
            cfg.filter_config(),
        )?),
        Safety::Off => None,
    };
    Ok(run_episode(&setup, policy, filter.as_mut(), world0, record))
}

/// Runs all episodes in memory, ordered by seed. Remote policies share one
/// connection and run sequentially.
pub fn run_experiment_episodes(
    cfg: &ExperimentConfig,
    record: bool,
) -> Result<Vec<EpisodeOutcome<f64>>> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.episodes as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let remote = matches!(cfg.policy, PolicySpec::Remote(_));
    if cfg.parallel && !remote {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut policy = build_policy(cfg)?;
                one_episode(cfg, seed, policy.as_mut(), record)
            })
            .collect()
    } else {
        let mut policy = build_policy(cfg)?;
        seeds
            .iter()
            .map(|&seed| one_episode(cfg, seed, policy.as_mut(), record))
            .collect()
    }
}

fn csv_row(r: &EpisodeResult) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.seed,
        r.steps,
        r.success,
        r.max_violation,
        r.clipped_steps,
        r.protocol_error.as_deref().unwrap_or("")
    )
}

/// Runs the batch and writes `config.json`, `episodes.csv`, `summary.json`
/// (and `traj-<seed>.jsonl` when enabled) into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    // fail on an unwritable output directory before any episode runs
    fs::create_dir_all(&cfg.out)?;
    let mut echoed = serde_json::to_string_pretty(cfg)?;
    echoed.push('\n');
    fs::write(cfg.out.join("config.json"), echoed)?;

    let outcomes = run_experiment_episodes(cfg, cfg.trajectories)?;
    let results: Vec<EpisodeResult> = outcomes.iter().map(|o| o.result.clone()).collect();

    let mut csv = BufWriter::new(File::create(cfg.out.join("episodes.csv"))?);
    writeln!(csv, "{EPISODES_CSV_HEADER}")?;
    for r in &results {
        writeln!(csv, "{}", csv_row(r))?;
    }
    csv.flush()?;

    if cfg.trajectories {
        for o in &outcomes {
            let mut f = BufWriter::new(File::create(
                cfg.out.join(format!("traj-{}.jsonl", o.result.seed)),
            )?);
            for rec in &o.trajectory {
                serde_json::to_writer(&mut f, rec)?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
        }
    }

    let summary = Summary::from_results(cfg, &results);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(cfg.out.join("summary.json"), text)?;
    Ok(summary)
}
