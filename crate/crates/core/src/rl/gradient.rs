use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use super::rollout::{discounted_return, trajectory_return, EpisodeSampler};
use super::{Result, RlError};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Mean return of the batch.
    #[default]
    MeanReturn,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    /// `theta <- theta + lr * grad`.
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl StepRule {
    pub fn adam() -> Self {
        StepRule::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlHyperparams {
    pub learning_rate: f64,
    pub n_trajectories: usize,
    pub divergence_bound: f64,
    /// Exploration scale of every raw-action dimension.
    pub log_std: f64,
    pub discount: f64,
    /// Optimize the discounted average instead of the plain time average.
    pub discounted_objective: bool,
    pub baseline: Baseline,
    /// Multiplies returns before they enter the gradient.
    pub reward_scale: f64,
    pub step_rule: StepRule,
    /// Rescales any update gradient longer than this; curvature estimates are never clipped.
    pub max_grad_norm: Option<f64>,
    pub curvature_trajectories: usize,
    pub curvature_epsilon: f64,
    pub curvature_floor: f64,
}

impl Default for RlHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            n_trajectories: 8,
            divergence_bound: 1e3,
            log_std: 0.5f64.ln(),
            discount: 0.99,
            discounted_objective: false,
            baseline: Baseline::MeanReturn,
            reward_scale: 1.0,
            step_rule: StepRule::Sgd,
            max_grad_norm: None,
            curvature_trajectories: 16,
            curvature_epsilon: 1e-2,
            curvature_floor: 1e-6,
        }
    }
}

impl RlHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RlError::InvalidArgument(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.n_trajectories == 0 || self.curvature_trajectories == 0 {
            return bad("trajectory counts must be >= 1");
        }
        if !(self.divergence_bound > 0.0) {
            return bad("divergence_bound must be > 0");
        }
        if !self.log_std.is_finite() {
            return bad("log_std must be finite");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward_scale must be > 0");
        }
        if self.max_grad_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("max_grad_norm must be > 0");
        }
        if !(self.curvature_epsilon > 0.0) || !(self.curvature_floor >= 0.0) {
            return bad("curvature_epsilon must be > 0 and curvature_floor >= 0");
        }
        Ok(())
    }

    pub fn episode_return<S>(&self, traj: &super::Trajectory<S>) -> Result<f64> {
        if self.discounted_objective {
            discounted_return(traj, self.discount)
        } else {
            trajectory_return(traj)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: DVector<f64>,
    pub n_trajectories: usize,
    pub baseline_value: f64,
    /// Unscaled mean return of the batch.
    pub mean_return: f64,
}

/// REINFORCE with a batch baseline:
/// `(1/n) sum_k scale * (rho_k - b) * sum_t grad log pi(a_t | s_t)`.
///
/// One seed per trajectory is drawn from `rng` up front, so the estimate does
/// not depend on how the rollouts are scheduled across threads.
pub fn estimate_policy_gradient<E: EpisodeSampler>(
    sampler: &E,
    policy: &PolicyParams,
    hyper: &RlHyperparams,
    n_traj: usize,
    rng: &mut SimRng,
) -> Result<GradientEstimate> {
    if n_traj == 0 {
        return Err(RlError::InvalidArgument("n_traj must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..n_traj).map(|_| rng.next_u64()).collect();
    let per_traj: Vec<(f64, DVector<f64>)> = seeds
        .par_iter()
        .map(|&seed| {
            let traj = sampler.sample_seeded(policy, seed)?;
            let ret = hyper.episode_return(&traj)?;
            let mut score = DVector::zeros(policy.dim());
            for step in &traj.steps {
                score += policy.log_prob_grad(&step.features, &step.raw_action)?;
            }
            Ok((ret, score))
        })
        .collect::<Result<_>>()?;

    let mean_return = per_traj.iter().map(|(r, _)| r).sum::<f64>() / n_traj as f64;
    let baseline_value = match hyper.baseline {
        Baseline::MeanReturn => mean_return,
        Baseline::Zero => 0.0,
    };
    let mut grad = DVector::zeros(policy.dim());
    for (ret, score) in &per_traj {
        grad.axpy(hyper.reward_scale * (ret - baseline_value), score, 1.0);
    }
    grad /= n_traj as f64;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(RlError::NonFinite("policy gradient".into()));
    }
    Ok(GradientEstimate { grad, n_trajectories: n_traj, baseline_value, mean_return })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub beta: PolicyParams,
    /// Mean return of the batch collected at each iteration, before its update.
    pub return_curve: Vec<f64>,
}

/// Gradient ascent on the expected return for a fixed number of updates.
pub fn train_task<E: EpisodeSampler>(
    sampler: &E,
    init: &PolicyParams,
    hyper: &RlHyperparams,
    iterations: usize,
    rng: &mut SimRng,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    if iterations == 0 {
        return Err(RlError::InvalidArgument("iterations must be >= 1".into()));
    }
    let mut policy = init.clone();
    let mut curve = Vec::with_capacity(iterations);
    let dim = policy.dim();
    let (mut m, mut v) = (DVector::zeros(dim), DVector::zeros(dim));

    for it in 0..iterations {
        let est = estimate_policy_gradient(sampler, &policy, hyper, hyper.n_trajectories, rng)?;
        curve.push(est.mean_return);
        let mut grad = est.grad;
        if let Some(cap) = hyper.max_grad_norm {
            let norm = grad.norm();
            if norm > cap {
                grad *= cap / norm;
            }
        }
        match hyper.step_rule {
            StepRule::Sgd => policy.theta.axpy(hyper.learning_rate, &grad, 1.0),
            StepRule::Adam { beta1, beta2, epsilon } => {
                let t = (it + 1) as i32;
                m = m * beta1 + &grad * (1.0 - beta1);
                v = v * beta2 + grad.map(|g| g * g) * (1.0 - beta2);
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for k in 0..dim {
                    policy.theta[k] += hyper.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
                }
            }
        }
        let max_abs = policy.theta.amax();
        if !max_abs.is_finite() || max_abs > hyper.divergence_bound {
            return Err(RlError::Diverged { iteration: it, max_abs });
        }
    }
    Ok(TrainOutcome { beta: policy, return_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::testing::QuadraticBandit;
    use crate::rng::seeded;
    use nalgebra::DMatrix;

    fn bandit_1d() -> QuadraticBandit {
        // reward = -(a - 1)^2
        QuadraticBandit::new(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 1.0))
    }

    #[test]
    fn equal_returns_give_a_zero_gradient() {
        let flat = QuadraticBandit { offset: 0.5, ..QuadraticBandit::new(DMatrix::zeros(2, 2), DVector::zeros(2)) };
        let policy = PolicyParams::zeros(1, 2, 0.0);
        let est = estimate_policy_gradient(&flat, &policy, &RlHyperparams::default(), 7, &mut seeded(1)).unwrap();
        assert_eq!(est.grad, DVector::zeros(2));
        assert_eq!(est.baseline_value, 0.5);
    }

    #[test]
    fn single_trajectory_without_baseline_is_return_times_score_sum() {
        let bandit = QuadraticBandit { horizon: 5, ..bandit_1d() };
        let hyper = RlHyperparams { baseline: Baseline::Zero, ..Default::default() };
        let policy = PolicyParams::with_theta(DVector::from_element(1, 0.3), 1, 1, hyper.log_std).unwrap();
        let mut rng = seeded(2);
        let est = estimate_policy_gradient(&bandit, &policy, &hyper, 1, &mut rng.clone()).unwrap();

        let traj = bandit.sample_seeded(&policy, rng.next_u64()).unwrap();
        let sigma2 = (2.0 * hyper.log_std).exp();
        let rho = traj.steps.iter().map(|s| s.reward).sum::<f64>() / traj.len() as f64;
        let score: f64 = traj.steps.iter().map(|s| (s.raw_action[0] - 0.3) / sigma2).sum();
        assert!((est.grad[0] - rho * score).abs() <= 1e-12 * (rho * score).abs().max(1.0));
        assert_eq!(est.baseline_value, 0.0);
    }

    #[test]
    fn mean_baseline_ignores_constant_reward_shifts() {
        let hyper = RlHyperparams::default();
        let policy = PolicyParams::with_theta(DVector::from_vec(vec![0.2, -0.4]), 2, 1, hyper.log_std).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let base = QuadraticBandit::new(a.clone(), DVector::from_vec(vec![1.0, 0.0]));
        let shifted = QuadraticBandit { offset: 123.0, ..QuadraticBandit::new(a, DVector::from_vec(vec![1.0, 0.0])) };
        let g0 = estimate_policy_gradient(&base, &policy, &hyper, 16, &mut seeded(3)).unwrap().grad;
        let g1 = estimate_policy_gradient(&shifted, &policy, &hyper, 16, &mut seeded(3)).unwrap().grad;
        assert!((&g0 - &g1).amax() <= 1e-9 * g0.amax().max(1.0), "{g0} vs {g1}");
    }

    #[test]
    fn gradient_ascent_finds_the_bandit_optimum() {
        let hyper = RlHyperparams { learning_rate: 0.05, n_trajectories: 16, ..Default::default() };
        let out = train_task(&bandit_1d(), &PolicyParams::zeros(1, 1, hyper.log_std), &hyper, 400, &mut seeded(4)).unwrap();
        assert!((out.beta.theta[0] - 1.0).abs() < 0.05, "theta = {}", out.beta.theta[0]);
        assert_eq!(out.return_curve.len(), 400);
    }

    #[test]
    fn zero_rate_freezes_the_policy_but_records_the_curve() {
        let hyper = RlHyperparams { learning_rate: 0.0, ..Default::default() };
        let init = PolicyParams::with_theta(DVector::from_element(1, 0.7), 1, 1, hyper.log_std).unwrap();
        let out = train_task(&bandit_1d(), &init, &hyper, 5, &mut seeded(5)).unwrap();
        assert_eq!(out.beta, init);
        assert_eq!(out.return_curve.len(), 5);
    }

    #[test]
    fn one_iteration_applies_exactly_one_update() {
        let hyper = RlHyperparams { learning_rate: 0.1, ..Default::default() };
        let init = PolicyParams::zeros(1, 1, hyper.log_std);
        let out = train_task(&bandit_1d(), &init, &hyper, 1, &mut seeded(6)).unwrap();
        let g = estimate_policy_gradient(&bandit_1d(), &init, &hyper, hyper.n_trajectories, &mut seeded(6)).unwrap();
        assert_eq!(out.beta.theta[0], 0.1 * g.grad[0]);
        assert_eq!(out.return_curve, vec![g.mean_return]);
    }

    #[test]
    fn clipping_bounds_the_step_length() {
        let hyper = RlHyperparams { learning_rate: 1.0, max_grad_norm: Some(1e-3), ..Default::default() };
        let init = PolicyParams::zeros(1, 3, hyper.log_std);
        let bandit = QuadraticBandit::new(DMatrix::identity(3, 3) * 50.0, DVector::from_vec(vec![5.0, -5.0, 2.0]));
        let out = train_task(&bandit, &init, &hyper, 1, &mut seeded(7)).unwrap();
        assert!((out.beta.theta.norm() - 1e-3).abs() < 1e-15);
        assert!(RlHyperparams { max_grad_norm: Some(0.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn runaway_parameters_trip_the_guard() {
        let hyper = RlHyperparams { learning_rate: 1e6, divergence_bound: 10.0, ..Default::default() };
        let err = train_task(&bandit_1d(), &PolicyParams::zeros(1, 1, hyper.log_std), &hyper, 50, &mut seeded(8));
        assert!(matches!(err, Err(RlError::Diverged { .. })), "{err:?}");
    }

    #[test]
    fn adam_first_step_moves_each_coordinate_by_the_rate() {
        let hyper = RlHyperparams { learning_rate: 0.01, step_rule: StepRule::adam(), ..Default::default() };
        let bandit = QuadraticBandit::new(DMatrix::identity(2, 2), DVector::from_vec(vec![3.0, -3.0]));
        let out = train_task(&bandit, &PolicyParams::zeros(1, 2, hyper.log_std), &hyper, 1, &mut seeded(9)).unwrap();
        for t in out.beta.theta.iter() {
            assert!((t.abs() - 0.01).abs() < 1e-6, "{t}");
        }
        let again = train_task(&bandit, &PolicyParams::zeros(1, 2, hyper.log_std), &hyper, 1, &mut seeded(9)).unwrap();
        assert_eq!(out, again);
    }
}
