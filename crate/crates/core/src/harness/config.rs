use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::Rect;
use crate::policies::{ExpertParams, V_EE_MAX};
use crate::{ArmModel, EpisodeConfig, Error, FilterConfig, Result, TableGeometry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Scripted,
    Random,
    Adversarial,
    Zero,
    /// `tcp://host:port` or `exec:<command>`.
    Remote(String),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Scripted => f.write_str("scripted"),
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::Adversarial => f.write_str("adversarial"),
            PolicySpec::Zero => f.write_str("zero"),
            PolicySpec::Remote(addr) => write!(f, "remote:{addr}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(PolicySpec::Scripted),
            "random" => Ok(PolicySpec::Random),
            "adversarial" => Ok(PolicySpec::Adversarial),
            "zero" => Ok(PolicySpec::Zero),
            _ => match s.strip_prefix("remote:") {
                Some(addr) if !addr.is_empty() => Ok(PolicySpec::Remote(addr.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown policy {s:?}; expected scripted, random, adversarial, zero or remote:<address>"
                ))),
            },
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Safety {
    On,
    Off,
}

impl FromStr for Safety {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Safety::On),
            "off" => Ok(Safety::Off),
            _ => Err(Error::Config(format!(
                "safety must be on or off, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for Safety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Safety::On => "on",
            Safety::Off => "off",
        })
    }
}

/// Table, arm and episode initialisation shared by all episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub table: TableGeometry<f64>,
    pub arm: ArmModel<f64>,
    pub puck_init_box: Rect<f64>,
    pub puck_init_speed_range: [f64; 2],
    pub home_q: Vector3<f64>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let ep = EpisodeConfig::<f64>::default();
        Self {
            table: TableGeometry::default(),
            arm: ArmModel::default(),
            puck_init_box: ep.puck_init_box,
            puck_init_speed_range: ep.puck_init_speed_range,
            home_q: ep.home_q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub policy: PolicySpec,
    pub safety: Safety,
    pub episodes: usize,
    /// Episode `i` uses seed `seed + i`.
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Damping of the inverse-kinematics map from end-effector to joint velocity.
    pub ik_damping: f64,
    pub v_ee_max: f64,
    pub filter: FilterConfig<f64>,
    pub world: WorldConfig,
    pub expert: ExpertParams<f64>,
    /// Label for reports; defaults to the policy name.
    pub condition: Option<String>,
    pub out: PathBuf,
    /// Write `traj-<seed>.jsonl` per episode.
    pub trajectories: bool,
    /// Run built-in policies on the rayon pool. Output is identical either way.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: PolicySpec::Scripted,
            safety: Safety::On,
            episodes: 100,
            seed: 0,
            dt: 0.02,
            horizon: 5.0,
            ik_damping: 0.05,
            v_ee_max: V_EE_MAX,
            filter: FilterConfig::default(),
            world: WorldConfig::default(),
            expert: ExpertParams::default(),
            condition: None,
            out: PathBuf::from("out"),
            trajectories: false,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Config("dt and horizon must be positive".into()));
        }
        if !(self.ik_damping >= 0.0) {
            return Err(Error::Config("ik_damping must be non-negative".into()));
        }
        if !(self.v_ee_max > 0.0) {
            return Err(Error::Config("v_ee_max must be positive".into()));
        }
        self.filter.validate()?;
        self.world.table.validate()?;
        self.world.arm.validate()?;
        self.episode_config(self.seed).validate()
    }

    pub fn condition_label(&self) -> String {
        self.condition
            .clone()
            .unwrap_or_else(|| self.policy.to_string())
    }

    pub fn episode_config(&self, seed: u64) -> EpisodeConfig<f64> {
        EpisodeConfig {
            horizon: self.horizon,
            dt: self.dt,
            puck_init_box: self.world.puck_init_box,
            puck_init_speed_range: self.world.puck_init_speed_range,
            seed,
            home_q: self.world.home_q,
        }
    }

    /// SHA-256 over the settings that influence results (output location and
    /// execution mode excluded).
    /// Filter settings with the step horizon defaulted to `dt`.
    pub fn filter_config(&self) -> FilterConfig<f64> {
        let mut filter = self.filter.clone();
        filter.step_horizon.get_or_insert(self.dt);
        filter
    }

    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.out = PathBuf::new();
        view.trajectories = false;
        view.parallel = false;
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
