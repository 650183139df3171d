//! Synthetic samplers with closed-form optima, for tests only.

use nalgebra::{DMatrix, DVector};

use super::{EpisodeSampler, PolicyParams, Result, Step, Trajectory};
use crate::rng::SimRng;

/// Bias-only bandit with reward `offset - (a - target)' A (a - target) / 2`
/// at each of `horizon` steps. The expected return is maximized at
/// `theta = target` and its Hessian there is `-A`.
pub struct QuadraticBandit {
    pub a: DMatrix<f64>,
    pub target: DVector<f64>,
    pub offset: f64,
    pub horizon: usize,
}

impl QuadraticBandit {
    pub fn new(a: DMatrix<f64>, target: DVector<f64>) -> Self {
        Self { a, target, offset: 0.0, horizon: 1 }
    }
}

impl EpisodeSampler for QuadraticBandit {
    type State = ();

    fn n_features(&self) -> usize {
        1
    }

    fn n_actions(&self) -> usize {
        self.target.len()
    }

    fn sample_episode(&self, policy: &PolicyParams, rng: &mut SimRng) -> Result<Trajectory<()>> {
        let features = DVector::from_element(1, 1.0);
        let steps = (0..self.horizon)
            .map(|_| {
                let raw = policy.sample(&features, rng)?;
                let e = &raw - &self.target;
                let reward = self.offset - 0.5 * e.dot(&(&self.a * &e));
                Ok(Step { state: (), features: features.clone(), raw_action: raw, reward })
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory { steps, seed: 0 })
    }
}
