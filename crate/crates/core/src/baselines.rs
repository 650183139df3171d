//! Comparison methods: a cold-start policy-gradient learner and a per-slot
//! drift-plus-penalty controller.

use serde::{Deserialize, Serialize};

use crate::env::{self, harvested_power, transmitted_data, ControlAction, Plant, SystemConfig, SystemState, TaskProfile};
use crate::rl::{train_task, EpisodeSampler, PolicyParams, RlHyperparams};
use crate::rng::SimRng;

/// Cold-start policy gradient: [`train_task`] from `theta = 0`.
pub fn vanilla_rl<E: EpisodeSampler>(
    sampler: &E,
    hyper: &RlHyperparams,
    iterations: usize,
    rng: &mut SimRng,
) -> crate::rl::Result<Vec<f64>> {
    let init = PolicyParams::zeros(sampler.n_features(), sampler.n_actions(), hyper.log_std);
    Ok(train_task(sampler, &init, hyper, iterations, rng)?.return_curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Weight of the energy penalty against the drift terms.
    pub v_weight: f64,
    pub grid_p0: usize,
    pub grid_alpha: usize,
    /// Battery level the virtual energy queue is centred on, in joules.
    pub battery_target: f64,
}

impl LyapunovConfig {
    /// `V = 10 B` and a target of half the battery capacity.
    pub fn for_system(cfg: &SystemConfig) -> Self {
        Self { v_weight: 10.0 * cfg.battery_capacity_j, grid_p0: 9, grid_alpha: 9, battery_target: cfg.battery_capacity_j / 2.0 }
    }

    pub fn validate(&self) -> env::Result<()> {
        if !(self.v_weight > 0.0) || self.grid_p0 < 2 || self.grid_alpha < 2 || !self.battery_target.is_finite() {
            return Err(env::EnvError::Config(format!("invalid Lyapunov settings {self:?}")));
        }
        Ok(())
    }

    /// Every feasible grid action, in lexicographic order of `(p0, a0, a1, a_eh)`.
    pub fn grid(&self, cfg: &SystemConfig) -> Vec<ControlAction> {
        let na = self.grid_alpha - 1;
        let mut out = Vec::new();
        for k in 0..self.grid_p0 {
            let p0 = cfg.p0_max_w * k as f64 / (self.grid_p0 - 1) as f64;
            for i in 0..=na {
                for j in 0..=na - i {
                    for l in 0..=na - i - j {
                        out.push(ControlAction {
                            p0,
                            alpha0: i as f64 / na as f64,
                            alpha1: j as f64 / na as f64,
                            alpha_eh: l as f64 / na as f64,
                        });
                    }
                }
            }
        }
        out
    }
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self::for_system(&SystemConfig::default())
    }
}

/// Per-slot drift-plus-penalty surrogate of `action` in `state`:
/// `V (p0 a0 + P1 a1) - q0 d0 - q1 d1 - (target - b)(harvest - P1 a1 slot)`.
pub fn drift_plus_penalty(
    state: &SystemState,
    action: &ControlAction,
    task: &TaskProfile,
    cfg: &SystemConfig,
    lyap: &LyapunovConfig,
) -> env::Result<f64> {
    let d0 = transmitted_data(action.p0, state.h0, action.alpha0, cfg);
    let d1 = transmitted_data(cfg.p1_w, state.h1, action.alpha1, cfg);
    let harvest = harvested_power(action.p0, state.h_eh, task, cfg)? * action.alpha_eh * cfg.slot_duration_s;
    let drain = cfg.p1_w * action.alpha1 * cfg.slot_duration_s;
    Ok(lyap.v_weight * action.transmit_power_cost(cfg) - state.q0 * d0 - state.q1 * d1
        - (lyap.battery_target - state.b) * (harvest - drain))
}

/// Exhaustive grid minimizer of [`drift_plus_penalty`]. Ties go to the
/// lower-energy action, then to the lexicographically smaller one.
pub fn lyapunov_controller(
    state: &SystemState,
    task: &TaskProfile,
    cfg: &SystemConfig,
    lyap: &LyapunovConfig,
) -> env::Result<ControlAction> {
    lyap.validate()?;
    let mut best: Option<(f64, f64, ControlAction)> = None;
    // Grid order is lexicographic, so keeping the first of equal candidates
    // implements the final tie-break.
    for action in lyap.grid(cfg) {
        let value = drift_plus_penalty(state, &action, task, cfg, lyap)?;
        let energy = action.transmit_power_cost(cfg);
        let better = match &best {
            None => true,
            Some((bv, be, _)) => value < *bv || (value == *bv && energy < *be),
        };
        if better {
            best = Some((value, energy, action));
        }
    }
    Ok(best.expect("grid is never empty").2)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub rewards: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub battery: Vec<f64>,
}

impl LyapunovTrace {
    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }
}

/// Drives the controller through `horizon` slots; traces hold pre-step values.
pub fn run_lyapunov(
    task: &TaskProfile,
    cfg: &SystemConfig,
    lyap: &LyapunovConfig,
    horizon: usize,
    rng: &mut SimRng,
) -> env::Result<LyapunovTrace> {
    if horizon == 0 {
        return Err(env::EnvError::Domain("horizon must be >= 1".into()));
    }
    let mut plant = Plant::new(*task, cfg.clone(), rng)?;
    let mut trace = LyapunovTrace::default();
    for _ in 0..horizon {
        let state = plant.state;
        let action = lyapunov_controller(&state, task, cfg, lyap)?;
        let outcome = plant.advance(&action, rng)?;
        trace.rewards.push(outcome.reward);
        trace.q0.push(state.q0);
        trace.q1.push(state.q1);
        trace.battery.push(state.b);
    }
    Ok(trace)
}
