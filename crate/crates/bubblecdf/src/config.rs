//! JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use bubblecdf_core::arm::ArmModel;
use bubblecdf_core::control::ControlMode;
use bubblecdf_core::neural::{MlpArch, TrainConfig};
use bubblecdf_core::oracle::ContactDbParams;
use bubblecdf_core::sim::{GeneratorParams, PlanMode, Scenario, SensorParams, SimParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScDbParams {
    pub n_samples: usize,
    pub overlap_tol: f64,
    pub seed: u64,
}

impl Default for ScDbParams {
    fn default() -> Self {
        Self { n_samples: 200_000, overlap_tol: 0.02, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub contact_db: PathBuf,
    pub oracle_db: PathBuf,
    pub sc_db: PathBuf,
    pub env_weights: PathBuf,
    pub sc_weights: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            contact_db: "data/contact_db.json".into(),
            oracle_db: "data/oracle_db.json".into(),
            sc_db: "data/sc_db.json".into(),
            env_weights: "data/env_weights.json".into(),
            sc_weights: "data/sc_weights.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchParams {
    pub n_scenarios: usize,
    pub planners: Vec<PlanMode>,
    pub controllers: Vec<ControlMode>,
    /// Planner whose trajectories the controllers track.
    pub control_planner: PlanMode,
    pub run_static: bool,
    pub run_dynamic: bool,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            n_scenarios: 100,
            planners: vec![PlanMode::Bubble, PlanMode::Rrt],
            controllers: vec![ControlMode::Pd, ControlMode::Cbf, ControlMode::DrCbf],
            control_planner: PlanMode::Bubble,
            run_static: true,
            run_dynamic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub arm: ArmModel,
    /// Use the exact databases as the barrier instead of trained networks.
    pub oracle: bool,
    /// Training-data database.
    pub contact_db: ContactDbParams,
    /// Finer database behind the oracle barrier in `plan`, `simulate` and
    /// `bench`; nearest-grid lookup error shrinks with the grid spacing.
    pub oracle_db: ContactDbParams,
    pub sc_db: ScDbParams,
    pub train_env: TrainConfig,
    pub train_sc: TrainConfig,
    pub paths: Paths,
    pub sensor: SensorParams,
    pub generator: GeneratorParams,
    pub sim: SimParams,
    pub bench: BenchParams,
    pub plan_mode: PlanMode,
    pub control_mode: ControlMode,
    /// Explicit scenario for `plan` and `simulate`; generated from the seed
    /// when absent.
    pub scenario: Option<Scenario>,
    pub dynamic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig {
            lr: 3e-3,
            lr_min: 1.5e-4,
            iterations: 30_000,
            val_size: 300,
            log_every: 500,
            arch: MlpArch { width: 64, ..MlpArch::default() },
            ..TrainConfig::default()
        };
        Self {
            seed: 0,
            arm: ArmModel::planar(&[2.0, 2.0]).expect("valid arm"),
            oracle: false,
            contact_db: ContactDbParams::default(),
            oracle_db: ContactDbParams { grid_res: 121, ..ContactDbParams::default() },
            sc_db: ScDbParams::default(),
            train_env: train.clone(),
            train_sc: TrainConfig { iterations: 5_000, ..train },
            paths: Paths::default(),
            sensor: SensorParams::default(),
            generator: GeneratorParams::default(),
            sim: SimParams::default(),
            bench: BenchParams::default(),
            plan_mode: PlanMode::Bubble,
            control_mode: ControlMode::DrCbf,
            scenario: None,
            dynamic: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Simulation parameters adjusted to the barrier in use: the oracle is
    /// deterministic, so repeated dropout passes would only duplicate
    /// samples.
    pub fn sim_params(&self, oracle: bool) -> SimParams {
        let mut p = self.sim.clone();
        if oracle {
            p.control.mc_passes = 1;
        }
        p.control.u_min.resize(self.arm.dof(), p.control.u_min.first().copied().unwrap_or(-2.0));
        p.control.u_max.resize(self.arm.dof(), p.control.u_max.first().copied().unwrap_or(2.0));
        p
    }
}
