use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, N_FEATURES};
use super::policy::PolicyParams;
use super::{Result, RlError};
use crate::env::{project_action, Plant, SystemConfig, SystemState, TaskProfile};
use crate::rng::{seeded, SimRng};

/// Number of raw action dimensions: `p0` logit and three time-share logits.
pub const N_ACTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step<S> {
    pub state: S,
    pub features: DVector<f64>,
    /// The action before projection onto the feasible set.
    pub raw_action: DVector<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S = SystemState> {
    pub steps: Vec<Step<S>>,
    pub seed: u64,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Something that can play out one episode under a linear-Gaussian policy.
pub trait EpisodeSampler: Sync {
    type State: Send;

    fn n_features(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn sample_episode(&self, policy: &PolicyParams, rng: &mut SimRng) -> Result<Trajectory<Self::State>>;

    /// Runs an episode on a stream seeded from `seed` and tags the result.
    fn sample_seeded(&self, policy: &PolicyParams, seed: u64) -> Result<Trajectory<Self::State>> {
        let mut rng = seeded(seed);
        let mut traj = self.sample_episode(policy, &mut rng)?;
        traj.seed = seed;
        Ok(traj)
    }
}

/// Episodes of `horizon` slots on the sensor-network plant for one task.
#[derive(Debug, Clone)]
pub struct WsnEpisodes {
    pub task: TaskProfile,
    pub cfg: SystemConfig,
    pub features: FeatureMap,
    pub horizon: usize,
}

impl WsnEpisodes {
    pub fn new(task: TaskProfile, cfg: SystemConfig, horizon: usize) -> Self {
        let features = FeatureMap::from_config(&cfg, 1.0);
        Self { task, cfg, features, horizon }
    }
}

impl EpisodeSampler for WsnEpisodes {
    type State = SystemState;

    fn n_features(&self) -> usize {
        N_FEATURES
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn sample_episode(&self, policy: &PolicyParams, rng: &mut SimRng) -> Result<Trajectory> {
        if self.horizon == 0 {
            return Err(RlError::InvalidArgument("horizon must be >= 1".into()));
        }
        let mut plant = Plant::new(self.task, self.cfg.clone(), rng)?;
        let mut steps = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let state = plant.state;
            let features = self.features.features(&state);
            let raw = policy.sample(&features, rng)?;
            let action = project_action(&[raw[0], raw[1], raw[2], raw[3]], &self.cfg)?;
            let outcome = plant.advance(&action, rng)?;
            if !outcome.reward.is_finite() {
                return Err(RlError::NonFinite("reward".into()));
            }
            steps.push(Step { state, features, raw_action: raw, reward: outcome.reward });
        }
        Ok(Trajectory { steps, seed: 0 })
    }
}

/// Plays `horizon` slots of `task` under `policy`.
pub fn rollout(
    policy: &PolicyParams,
    task: &TaskProfile,
    cfg: &SystemConfig,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    let sampler = WsnEpisodes::new(*task, cfg.clone(), horizon);
    sampler.sample_seeded(policy, rng.next_u64())
}

/// Time-averaged reward of a trajectory.
pub fn trajectory_return<S>(traj: &Trajectory<S>) -> Result<f64> {
    if traj.is_empty() {
        return Err(RlError::EmptyTrajectory);
    }
    Ok(traj.steps.iter().map(|s| s.reward).sum::<f64>() / traj.len() as f64)
}

/// Discount-weighted average `sum g^t r_t / sum g^t`; equals the plain mean at `g = 1`.
pub fn discounted_return<S>(traj: &Trajectory<S>, gamma: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(RlError::EmptyTrajectory);
    }
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for s in &traj.steps {
        num += w * s.reward;
        den += w;
        w *= gamma;
    }
    Ok(num / den)
}
