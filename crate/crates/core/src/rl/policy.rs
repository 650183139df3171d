use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Result, RlError};
use crate::rng::SimRng;

/// Linear-Gaussian policy `a ~ N(Theta f, diag(exp(log_std))^2)`.
///
/// `theta` is `vec(Theta)`: the `n_actions x n_features` matrix stacked
/// column by column, so `theta[f * n_actions + a]` weighs feature `f` for
/// action dimension `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: DVector<f64>,
    pub log_std: DVector<f64>,
    pub n_features: usize,
}

impl PolicyParams {
    pub fn zeros(n_features: usize, n_actions: usize, log_std: f64) -> Self {
        Self {
            theta: DVector::zeros(n_features * n_actions),
            log_std: DVector::from_element(n_actions, log_std),
            n_features,
        }
    }

    pub fn with_theta(theta: DVector<f64>, n_actions: usize, n_features: usize, log_std: f64) -> Result<Self> {
        if theta.len() != n_actions * n_features {
            return Err(RlError::Dimension(format!(
                "theta has {} entries, expected {} x {}",
                theta.len(),
                n_actions,
                n_features
            )));
        }
        Ok(Self { theta, log_std: DVector::from_element(n_actions, log_std), n_features })
    }

    pub fn n_actions(&self) -> usize {
        self.log_std.len()
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn check(&self, features: &DVector<f64>) -> Result<()> {
        if features.len() != self.n_features || self.theta.len() != self.n_features * self.n_actions() {
            return Err(RlError::Dimension(format!(
                "theta {} / features {} / actions {}",
                self.theta.len(),
                features.len(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    pub fn mean(&self, features: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(features)?;
        let weights = DMatrix::from_column_slice(self.n_actions(), self.n_features, self.theta.as_slice());
        Ok(weights * features)
    }

    pub fn sample(&self, features: &DVector<f64>, rng: &mut SimRng) -> Result<DVector<f64>> {
        let mut action = self.mean(features)?;
        for (a, ls) in action.iter_mut().zip(self.log_std.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *a += ls.exp() * z;
        }
        Ok(action)
    }

    pub fn log_prob(&self, features: &DVector<f64>, action: &DVector<f64>) -> Result<f64> {
        let mean = self.mean(features)?;
        Ok(mean
            .iter()
            .zip(action.iter())
            .zip(self.log_std.iter())
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum())
    }

    /// Score `grad_theta log pi(action | features)`, laid out like `theta`.
    pub fn log_prob_grad(&self, features: &DVector<f64>, action: &DVector<f64>) -> Result<DVector<f64>> {
        let mean = self.mean(features)?;
        if action.len() != mean.len() {
            return Err(RlError::Dimension(format!("action has {} entries, expected {}", action.len(), mean.len())));
        }
        let n_a = self.n_actions();
        let scaled: Vec<f64> = (0..n_a)
            .map(|a| (action[a] - mean[a]) / (2.0 * self.log_std[a]).exp())
            .collect();
        let mut grad = DVector::zeros(self.theta.len());
        for (f, fv) in features.iter().enumerate() {
            for (a, s) in scaled.iter().enumerate() {
                grad[f * n_a + a] = s * fv;
            }
        }
        Ok(grad)
    }
}

pub fn policy_mean(theta: &PolicyParams, features: &DVector<f64>) -> Result<DVector<f64>> {
    theta.mean(features)
}

pub fn sample_action(theta: &PolicyParams, features: &DVector<f64>, rng: &mut SimRng) -> Result<DVector<f64>> {
    theta.sample(features, rng)
}

pub fn log_prob_grad(theta: &PolicyParams, features: &DVector<f64>, raw_action: &DVector<f64>) -> Result<DVector<f64>> {
    theta.log_prob_grad(features, raw_action)
}
