use serde::{Deserialize, Serialize};
use std::path::Path;

use super::tasks::{default_test_profiles, TestProfile, TrainingRanges};
use super::{HarnessError, Result};
use crate::baselines::LyapunovConfig;
use crate::env::{PenaltyMode, SystemConfig, TaskProfile};
use crate::lifelong::LifelongHyperparams;
use crate::rl::RlHyperparams;

/// Everything one experiment needs. Missing TOML keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream in the experiment.
    pub master_seed: u64,
    pub n_training_tasks: usize,
    pub training_ranges: TrainingRanges,
    pub test_profiles: Vec<TestProfile>,
    /// Slots per episode.
    pub horizon: usize,
    /// Policy updates per test run, probe included.
    pub test_iterations: usize,
    pub seeds: Vec<u64>,
    /// Episodes the controller is evaluated over per run.
    pub lyapunov_episodes: usize,
    pub convergence_fraction: f64,
    pub smoothing_window: usize,
    pub system: SystemConfig,
    pub rl: RlHyperparams,
    pub lifelong: LifelongHyperparams,
    pub lyapunov: LyapunovConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // The signed penalty rewards raw throughput, which at these rates
        // swamps every other term, so learning runs on the hinge form. With
        // nu = 1 a joule of battery overflow outweighs the transmit energy a
        // thousandfold; 0.01 puts the two on a comparable footing.
        let system = SystemConfig { penalty_mode: PenaltyMode::Hinge, penalty_nu: 0.01, ..SystemConfig::default() };
        // Per-slot returns are of order 1e-3. Rare overflow slots produce
        // gradients orders of magnitude above the typical one, hence the clip.
        let rl = RlHyperparams { reward_scale: 1e3, max_grad_norm: Some(5.0), ..RlHyperparams::default() };
        let lifelong = LifelongHyperparams::default();
        Self {
            master_seed: 2024,
            n_training_tasks: 25,
            training_ranges: TrainingRanges::default(),
            test_profiles: default_test_profiles(),
            horizon: 500,
            test_iterations: 200,
            seeds: (0..10).collect(),
            lyapunov_episodes: 20,
            convergence_fraction: 0.9,
            smoothing_window: 10,
            lyapunov: LyapunovConfig::for_system(&system),
            system,
            rl,
            lifelong,
        }
    }
}

impl ExperimentConfig {
    /// A few-second configuration for tests and dry runs.
    pub fn smoke() -> Self {
        let base = Self::default();
        Self {
            n_training_tasks: 3,
            horizon: 40,
            test_iterations: 12,
            seeds: vec![0, 1],
            lyapunov_episodes: 2,
            smoothing_window: 3,
            test_profiles: base.test_profiles[..2].to_vec(),
            rl: RlHyperparams { n_trajectories: 4, curvature_trajectories: 2, ..base.rl.clone() },
            lifelong: LifelongHyperparams { task_iterations: 10, probe_budget: 2, ..base.lifelong.clone() },
            lyapunov: LyapunovConfig { grid_p0: 3, grid_alpha: 3, ..base.lyapunov.clone() },
            ..base
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_training_tasks == 0 {
            return bad("n_training_tasks must be >= 1".into());
        }
        if self.test_profiles.is_empty() || self.seeds.is_empty() {
            return bad("need at least one test profile and one seed".into());
        }
        if self.horizon == 0 || self.lyapunov_episodes == 0 {
            return bad("horizon and lyapunov_episodes must be >= 1".into());
        }
        if self.test_iterations <= self.lifelong.probe_budget {
            return bad(format!(
                "test_iterations ({}) must exceed probe_budget ({})",
                self.test_iterations, self.lifelong.probe_budget
            ));
        }
        if !(self.convergence_fraction > 0.0 && self.convergence_fraction <= 1.0) {
            return bad(format!("convergence_fraction must lie in (0, 1], got {}", self.convergence_fraction));
        }
        if self.smoothing_window == 0 {
            return bad("smoothing_window must be >= 1".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.system.validate()?;
        self.rl.validate()?;
        self.lifelong.validate()?;
        self.lyapunov.validate()?;
        self.test_tasks()?;
        Ok(())
    }

    pub fn test_tasks(&self) -> Result<Vec<TaskProfile>> {
        self.test_profiles
            .iter()
            .enumerate()
            .map(|(j, p)| TaskProfile::new(j, p.zeta_eh, p.lambda_eff).map_err(HarnessError::from))
            .collect()
    }
}
