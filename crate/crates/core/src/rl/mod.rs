//! Linear-Gaussian policies and the episodic policy-gradient learner.
//!
//! The same machinery serves the sensor-network plant ([`WsnEpisodes`]) and
//! any other [`EpisodeSampler`], which keeps synthetic problems with known
//! optima usable as test oracles.

mod curvature;
mod features;
mod gradient;
mod policy;
mod rollout;
#[cfg(test)]
pub(crate) mod testing;

use thiserror::Error;

use crate::env::EnvError;

pub use curvature::{estimate_curvature, project_psd, CurvatureEstimate};
pub use features::{FeatureMap, N_FEATURES};
pub use gradient::{
    estimate_policy_gradient, train_task, Baseline, GradientEstimate, RlHyperparams, StepRule, TrainOutcome,
};
pub use policy::{log_prob_grad, policy_mean, sample_action, PolicyParams};
pub use rollout::{
    discounted_return, rollout, trajectory_return, EpisodeSampler, Step, Trajectory, WsnEpisodes, N_ACTIONS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("policy diverged at iteration {iteration}: |theta|_inf = {max_abs}")]
    Diverged { iteration: usize, max_abs: f64 },
}

pub type Result<T> = std::result::Result<T, RlError>;
