use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, TaskProfile};
use crate::rng::SimRng;

/// Uniform ranges the training tasks are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingRanges {
    pub zeta_eh: [f64; 2],
    pub lambda_eff: [f64; 2],
}

impl Default for TrainingRanges {
    fn default() -> Self {
        Self { zeta_eh: [0.5, 1.5], lambda_eff: [0.3, 0.6] }
    }
}

/// `n` i.i.d. profiles, `zeta_eh ~ U(0.5, 1.5)` and `lambda_eff ~ U(0.3, 0.6)` by default.
pub fn generate_training_tasks(n: usize, ranges: &TrainingRanges, rng: &mut SimRng) -> env::Result<Vec<TaskProfile>> {
    if n == 0 {
        return Err(env::EnvError::Domain("need at least one training task".into()));
    }
    let [zlo, zhi] = ranges.zeta_eh;
    let [llo, lhi] = ranges.lambda_eff;
    if !(0.0 < zlo && zlo <= zhi && 0.0 < llo && llo <= lhi && lhi <= 1.0) {
        return Err(env::EnvError::Domain(format!("bad training ranges {ranges:?}")));
    }
    (0..n)
        .map(|j| {
            let zeta = rng.random_range(zlo..=zhi);
            let lambda = rng.random_range(llo..=lhi);
            TaskProfile::new(j, zeta, lambda)
        })
        .collect()
}

/// One unseen test regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestProfile {
    pub zeta_eh: f64,
    pub lambda_eff: f64,
}

/// The four held-out regimes, scale and efficiency paired by position.
pub fn test_tasks() -> Vec<TaskProfile> {
    default_test_profiles()
        .iter()
        .enumerate()
        .map(|(j, p)| TaskProfile { task_id: j, zeta_eh: p.zeta_eh, lambda_eff: p.lambda_eff })
        .collect()
}

pub fn default_test_profiles() -> Vec<TestProfile> {
    [(0.6, 0.35), (1.0, 0.45), (1.4, 0.55), (1.8, 0.65)]
        .into_iter()
        .map(|(zeta_eh, lambda_eff)| TestProfile { zeta_eh, lambda_eff })
        .collect()
}
