//! Two-pair SWIPT sensor network plant.
//!
//! `TX0` is mains powered and splits its power budget between data for `RX0`
//! and wireless energy transfer to `TX1`. `TX1` transmits at a fixed power out
//! of a rechargeable battery. Each slot the controller picks the `TX0` data
//! power and three time fractions (data 0, data 1, harvesting). Queue and
//! battery recursions, rates and the penalized reward live here.

use std::f64::consts::PI;
use std::ops::Range;

use rand_distr::{Distribution, Poisson, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid system configuration: {0}")]
    Config(String),
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// How the constraint terms of the reward are penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// `(b - B) + sum_i (q_i - d_i)` taken as written, slack included.
    #[default]
    Signed,
    /// Each term replaced by `max(term, 0)`, so only violations are charged.
    Hinge,
}

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Physical and reward parameters shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    /// Effective noise power in watts, divided directly into `p * h`.
    pub noise_power_w: f64,
    /// Mean arrival rate per transmitter, bits per second.
    pub arrival_rate_bps: f64,
    pub p0_max_w: f64,
    pub p1_w: f64,
    pub battery_capacity_j: f64,
    pub slot_duration_s: f64,
    pub penalty_nu: f64,
    pub penalty_mode: PenaltyMode,
    /// Clip the battery at capacity instead of letting the reward penalize it.
    pub battery_clip: bool,
    /// Rayleigh scales of the two data links.
    pub zeta0: f64,
    pub zeta1: f64,
    /// Channel gains are redrawn every this many slots.
    pub coherence_slots: usize,
    pub initial_battery_j: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5e6,
            noise_power_w: dbm_to_watts(-120.0),
            arrival_rate_bps: 1e3,
            p0_max_w: 0.03,
            p1_w: 0.01,
            battery_capacity_j: 5.0,
            slot_duration_s: 1.0,
            penalty_nu: 1.0,
            penalty_mode: PenaltyMode::Signed,
            battery_clip: false,
            zeta0: 1.0,
            zeta1: 1.0,
            coherence_slots: 1,
            initial_battery_j: 0.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("p0_max_w", self.p0_max_w),
            ("p1_w", self.p1_w),
            ("battery_capacity_j", self.battery_capacity_j),
            ("slot_duration_s", self.slot_duration_s),
            ("zeta0", self.zeta0),
            ("zeta1", self.zeta1),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(EnvError::Config(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        let non_negative = [
            ("arrival_rate_bps", self.arrival_rate_bps),
            ("penalty_nu", self.penalty_nu),
            ("initial_battery_j", self.initial_battery_j),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(EnvError::Config(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        if self.coherence_slots == 0 {
            return Err(EnvError::Config("coherence_slots must be >= 1".into()));
        }
        Ok(())
    }
}

/// One stationary harvesting regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub task_id: usize,
    /// Rayleigh scale of the harvesting channel.
    pub zeta_eh: f64,
    /// RF-to-DC conversion efficiency in (0, 1].
    pub lambda_eff: f64,
}

impl TaskProfile {
    pub fn new(task_id: usize, zeta_eh: f64, lambda_eff: f64) -> Result<Self> {
        if !(zeta_eh.is_finite() && zeta_eh > 0.0) {
            return Err(EnvError::Domain(format!("zeta_eh must be > 0, got {zeta_eh}")));
        }
        if !(lambda_eff > 0.0 && lambda_eff <= 1.0) {
            return Err(EnvError::Domain(format!("lambda_eff must lie in (0, 1], got {lambda_eff}")));
        }
        Ok(Self { task_id, zeta_eh, lambda_eff })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    /// Queue backlogs in bits.
    pub q0: f64,
    pub q1: f64,
    /// Battery energy in joules.
    pub b: f64,
    pub h0: f64,
    pub h1: f64,
    pub h_eh: f64,
}

impl SystemState {
    pub fn is_valid(&self) -> bool {
        [self.q0, self.q1, self.b, self.h0, self.h1, self.h_eh]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Empty queues, the configured initial battery and freshly drawn gains.
    pub fn initial(task: &TaskProfile, cfg: &SystemConfig, rng: &mut SimRng) -> Result<Self> {
        let mut state = SystemState { b: cfg.initial_battery_j, ..Default::default() };
        state.redraw_channels(task, cfg, rng)?;
        Ok(state)
    }

    fn redraw_channels(&mut self, task: &TaskProfile, cfg: &SystemConfig, rng: &mut SimRng) -> Result<()> {
        self.h0 = sample_channel(cfg.zeta0, rng)?;
        self.h1 = sample_channel(cfg.zeta1, rng)?;
        self.h_eh = sample_channel(task.zeta_eh, rng)?;
        Ok(())
    }
}

/// Per-slot decision: `TX0` data power and the three time fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAction {
    pub p0: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha_eh: f64,
}

// Round-off allowance on the time-sharing budget.
const SHARE_SLACK: f64 = 1e-12;

impl ControlAction {
    pub fn new(p0: f64, alpha0: f64, alpha1: f64, alpha_eh: f64, cfg: &SystemConfig) -> Result<Self> {
        let action = Self { p0, alpha0, alpha1, alpha_eh };
        action.check(cfg)?;
        Ok(action)
    }

    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if !(self.p0 >= 0.0 && self.p0 <= cfg.p0_max_w) {
            return Err(EnvError::InfeasibleAction(format!(
                "p0 = {} outside [0, {}]",
                self.p0, cfg.p0_max_w
            )));
        }
        for (name, a) in [("alpha0", self.alpha0), ("alpha1", self.alpha1), ("alpha_eh", self.alpha_eh)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(EnvError::InfeasibleAction(format!("{name} = {a} outside [0, 1]")));
            }
        }
        let total = self.alpha0 + self.alpha1 + self.alpha_eh;
        if total > 1.0 + SHARE_SLACK {
            return Err(EnvError::InfeasibleAction(format!("time fractions sum to {total} > 1")));
        }
        Ok(())
    }

    /// Energy spent on transmission in one slot, `p0 * a0 + P1 * a1` (per unit time).
    pub fn transmit_power_cost(&self, cfg: &SystemConfig) -> f64 {
        self.p0 * self.alpha0 + cfg.p1_w * self.alpha1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub battery_over_capacity: bool,
    pub queue0_underserved: bool,
    pub queue1_underserved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: SystemState,
    pub reward: f64,
    /// Bits sent on link 0 and link 1 during the slot.
    pub transmitted_bits: [f64; 2],
    pub harvested_energy: f64,
    pub violations: Violations,
}

/// One Rayleigh(`zeta`) channel-gain magnitude.
pub fn sample_channel(zeta: f64, rng: &mut SimRng) -> Result<f64> {
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(EnvError::Domain(format!("Rayleigh scale must be > 0, got {zeta}")));
    }
    // Rayleigh(zeta) is Weibull with shape 2 and scale zeta * sqrt(2).
    let dist = Weibull::new(zeta * std::f64::consts::SQRT_2, 2.0)
        .map_err(|e| EnvError::Domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Mean of a Rayleigh(`zeta`) variable.
pub fn rayleigh_mean(zeta: f64) -> f64 {
    zeta * (PI / 2.0).sqrt()
}

/// Poisson bit count arriving during one slot.
pub fn sample_arrivals(rate: f64, slot_duration: f64, rng: &mut SimRng) -> Result<f64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(EnvError::Domain(format!("arrival rate must be >= 0, got {rate}")));
    }
    let mean = rate * slot_duration;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let dist = Poisson::new(mean).map_err(|e| EnvError::Domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Bits delivered in one slot at power `p` over gain `h` for a fraction `alpha`.
pub fn transmitted_data(p: f64, h: f64, alpha: f64, cfg: &SystemConfig) -> f64 {
    debug_assert!(p >= 0.0 && h >= 0.0 && (0.0..=1.0).contains(&alpha));
    cfg.bandwidth_hz * (p * h / cfg.noise_power_w).ln_1p() / std::f64::consts::LN_2 * alpha * cfg.slot_duration_s
}

/// Power reaching `TX1`'s battery from the residual `P0 - p0`.
pub fn harvested_power(p0: f64, h_eh: f64, task: &TaskProfile, cfg: &SystemConfig) -> Result<f64> {
    if p0 > cfg.p0_max_w {
        return Err(EnvError::Domain(format!("p0 = {p0} exceeds P0 = {}", cfg.p0_max_w)));
    }
    if p0 < 0.0 {
        return Err(EnvError::Domain(format!("p0 = {p0} is negative")));
    }
    Ok(task.lambda_eff * (cfg.p0_max_w - p0) * h_eh)
}

pub fn queue_update(q: f64, d: f64, a: f64) -> f64 {
    (q - d).max(0.0) + a
}

pub fn battery_update(b: f64, p1: f64, alpha1: f64, p_eh: f64, alpha_eh: f64, slot: f64) -> f64 {
    (b - p1 * alpha1 * slot).max(0.0) + p_eh * alpha_eh * slot
}

/// Penalized per-slot reward, from the pre-update state and this slot's throughput.
pub fn reward(state: &SystemState, action: &ControlAction, d0: f64, d1: f64, cfg: &SystemConfig) -> f64 {
    let cost = action.transmit_power_cost(cfg);
    let terms = [state.b - cfg.battery_capacity_j, state.q0 - d0, state.q1 - d1];
    let penalty: f64 = match cfg.penalty_mode {
        PenaltyMode::Signed => terms.iter().sum(),
        PenaltyMode::Hinge => terms.iter().map(|t| t.max(0.0)).sum(),
    };
    -cost - cfg.penalty_nu * penalty
}

const MAX_LOGIT: f64 = 30.0;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps an unconstrained 4-vector onto the feasible action set.
///
/// `p0 = P0 * sigmoid(raw[0])`; the time fractions are a softmax over
/// `(raw[1], raw[2], raw[3], 0)`, the last logit being an idle share.
pub fn project_action(raw: &[f64; 4], cfg: &SystemConfig) -> Result<ControlAction> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::Domain(format!("non-finite raw action {raw:?}")));
    }
    let p0 = (cfg.p0_max_w * sigmoid(raw[0])).min(cfg.p0_max_w);
    // Capping the logits keeps the idle share representable, so the three
    // fractions always sum to strictly less than one.
    let logits = [raw[1].min(MAX_LOGIT), raw[2].min(MAX_LOGIT), raw[3].min(MAX_LOGIT), 0.0];
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let z: f64 = exps.iter().sum();
    Ok(ControlAction {
        p0,
        alpha0: exps[0] / z,
        alpha1: exps[1] / z,
        alpha_eh: exps[2] / z,
    })
}

/// Advances the plant by one slot and redraws all channel gains.
pub fn step(
    state: &SystemState,
    action: &ControlAction,
    task: &TaskProfile,
    cfg: &SystemConfig,
    rng: &mut SimRng,
) -> Result<StepOutcome> {
    step_with_redraw(state, action, task, cfg, rng, true)
}

pub(crate) fn step_with_redraw(
    state: &SystemState,
    action: &ControlAction,
    task: &TaskProfile,
    cfg: &SystemConfig,
    rng: &mut SimRng,
    redraw: bool,
) -> Result<StepOutcome> {
    if !state.is_valid() {
        return Err(EnvError::Domain(format!("invalid state {state:?}")));
    }
    action.check(cfg)?;

    let d0 = transmitted_data(action.p0, state.h0, action.alpha0, cfg);
    let d1 = transmitted_data(cfg.p1_w, state.h1, action.alpha1, cfg);
    let p_eh = harvested_power(action.p0, state.h_eh, task, cfg)?;
    let r = reward(state, action, d0, d1, cfg);

    let a0 = sample_arrivals(cfg.arrival_rate_bps, cfg.slot_duration_s, rng)?;
    let a1 = sample_arrivals(cfg.arrival_rate_bps, cfg.slot_duration_s, rng)?;
    let mut b = battery_update(state.b, cfg.p1_w, action.alpha1, p_eh, action.alpha_eh, cfg.slot_duration_s);
    if cfg.battery_clip {
        b = b.min(cfg.battery_capacity_j);
    }
    let mut next = SystemState {
        q0: queue_update(state.q0, d0, a0),
        q1: queue_update(state.q1, d1, a1),
        b,
        ..*state
    };
    if redraw {
        next.redraw_channels(task, cfg, rng)?;
    }

    Ok(StepOutcome {
        next_state: next,
        reward: r,
        transmitted_bits: [d0, d1],
        harvested_energy: p_eh * action.alpha_eh * cfg.slot_duration_s,
        violations: Violations {
            battery_over_capacity: state.b > cfg.battery_capacity_j,
            queue0_underserved: state.q0 > d0,
            queue1_underserved: state.q1 > d1,
        },
    })
}

/// A running plant instance for one task, honouring the channel coherence setting.
#[derive(Debug, Clone)]
pub struct Plant {
    pub cfg: SystemConfig,
    pub task: TaskProfile,
    pub state: SystemState,
    pub slot: usize,
}

impl Plant {
    pub fn new(task: TaskProfile, cfg: SystemConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let state = SystemState::initial(&task, &cfg, rng)?;
        Ok(Self { cfg, task, state, slot: 0 })
    }

    pub fn advance(&mut self, action: &ControlAction, rng: &mut SimRng) -> Result<StepOutcome> {
        let redraw = (self.slot + 1) % self.cfg.coherence_slots == 0;
        let outcome = step_with_redraw(&self.state, action, &self.task, &self.cfg, rng, redraw)?;
        self.state = outcome.next_state;
        self.slot += 1;
        Ok(outcome)
    }
}

/// Slot ranges of consecutive stationary tasks of `period` slots each.
pub fn make_task_schedule(period: usize, num_tasks: usize) -> Vec<Range<usize>> {
    (0..num_tasks).map(|j| j * period..(j + 1) * period).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn task() -> TaskProfile {
        TaskProfile::new(0, 1.0, 0.45).unwrap()
    }

    #[test]
    fn default_config_matches_reference_values() {
        let cfg = SystemConfig::default();
        assert_eq!(cfg.bandwidth_hz, 5e6);
        assert_relative_eq!(cfg.noise_power_w, 1e-15, max_relative = 1e-12);
        assert_eq!(cfg.p0_max_w, 0.03);
        assert_eq!(cfg.p1_w, 0.01);
        assert_eq!(cfg.battery_capacity_j, 5.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let cfg = SystemConfig { bandwidth_hz: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig { penalty_nu: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig { zeta1: f64::NAN, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn task_profile_domain() {
        assert!(TaskProfile::new(0, 1.0, 1.0).is_ok());
        assert!(TaskProfile::new(0, 1.0, 0.0).is_err());
        assert!(TaskProfile::new(0, 1.0, 1.01).is_err());
        assert!(TaskProfile::new(0, 0.0, 0.5).is_err());
    }

    #[test]
    fn channel_rejects_bad_scale_and_is_non_negative() {
        let mut rng = seeded(1);
        assert!(sample_channel(0.0, &mut rng).is_err());
        assert!(sample_channel(-2.0, &mut rng).is_err());
        for _ in 0..1000 {
            assert!(sample_channel(0.3, &mut rng).unwrap() >= 0.0);
        }
    }

    #[test]
    fn arrivals_zero_rate_and_support() {
        let mut rng = seeded(2);
        assert_eq!(sample_arrivals(0.0, 1.0, &mut rng).unwrap(), 0.0);
        assert!(sample_arrivals(-1.0, 1.0, &mut rng).is_err());
        for _ in 0..100 {
            let a = sample_arrivals(5.0, 1.0, &mut rng).unwrap();
            assert!(a >= 0.0 && a.fract() == 0.0);
        }
    }

    #[test]
    fn transmitted_data_cases() {
        let cfg = SystemConfig { noise_power_w: 1.0, ..Default::default() };
        // p*h/N0 = 1 gives exactly W bits.
        assert_eq!(transmitted_data(1.0, 1.0, 1.0, &cfg), cfg.bandwidth_hz);
        assert_eq!(transmitted_data(0.0, 3.0, 0.7, &cfg), 0.0);
        let cfg = SystemConfig { noise_power_w: 1e-15, ..Default::default() };
        let d = transmitted_data(0.03, 1.0, 0.5, &cfg);
        let oracle = 5e6 * (1.0f64 + 3e13).log2() * 0.5;
        assert_relative_eq!(d, oracle, max_relative = 1e-12);
        // Quoted to four figures as ~1.1195e8.
        assert_relative_eq!(d, 1.1195e8, max_relative = 5e-4);
    }

    #[test]
    fn harvested_power_cases() {
        let cfg = SystemConfig::default();
        let t = task();
        assert_eq!(harvested_power(cfg.p0_max_w, 2.0, &t, &cfg).unwrap(), 0.0);
        assert_relative_eq!(harvested_power(0.01, 1.0, &t, &cfg).unwrap(), 0.009, max_relative = 1e-12);
        assert_eq!(harvested_power(0.01, 0.0, &t, &cfg).unwrap(), 0.0);
        assert!(harvested_power(0.031, 1.0, &t, &cfg).is_err());
    }

    #[test]
    fn queue_and_battery_cases() {
        assert_eq!(queue_update(10.0, 4.0, 2.0), 8.0);
        assert_eq!(queue_update(3.0, 5.0, 1.0), 1.0);
        assert_eq!(queue_update(0.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(battery_update(1.0, 0.01, 1.0, 0.0, 0.0, 1.0), 0.99, max_relative = 1e-12);
        assert_eq!(battery_update(0.005, 0.01, 1.0, 0.009, 0.0, 1.0), 0.0);
        assert_relative_eq!(battery_update(0.0, 0.0, 0.0, 0.009, 0.5, 1.0), 0.0045, max_relative = 1e-12);
    }

    #[test]
    fn reward_cases() {
        let cfg = SystemConfig::default();
        let zero = SystemState::default();
        assert_eq!(reward(&zero, &ControlAction::default(), 0.0, 0.0, &cfg), 5.0);

        let quiet = SystemConfig { penalty_nu: 0.0, ..Default::default() };
        let a = ControlAction { p0: 0.03, alpha0: 1.0, ..Default::default() };
        assert_eq!(reward(&zero, &a, 0.0, 0.0, &quiet), -0.03);

        let s = SystemState { b: 6.0, q0: 7.0, q1: 2.0, ..Default::default() };
        assert_eq!(reward(&s, &ControlAction::default(), 7.0, 2.0, &cfg), -1.0);
    }

    #[test]
    fn hinge_reward_charges_only_violations() {
        let cfg = SystemConfig { penalty_mode: PenaltyMode::Hinge, ..Default::default() };
        let zero = SystemState::default();
        assert_eq!(reward(&zero, &ControlAction::default(), 0.0, 0.0, &cfg), 0.0);
        let s = SystemState { b: 6.0, q0: 10.0, q1: 1.0, ..Default::default() };
        assert_eq!(reward(&s, &ControlAction::default(), 4.0, 5.0, &cfg), -(1.0 + 6.0));
    }

    #[test]
    fn projection_cases() {
        let cfg = SystemConfig::default();
        let a = project_action(&[0.0; 4], &cfg).unwrap();
        assert_eq!(a.p0, cfg.p0_max_w / 2.0);
        for alpha in [a.alpha0, a.alpha1, a.alpha_eh] {
            assert_relative_eq!(alpha, 0.25, max_relative = 1e-15);
        }
        let a = project_action(&[-800.0, 0.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.p0, 0.0);
        let a = project_action(&[50.0, 40.0, 40.0, 40.0], &cfg).unwrap();
        assert!(a.alpha0 + a.alpha1 + a.alpha_eh < 1.0);
        assert!(project_action(&[f64::NAN, 0.0, 0.0, 0.0], &cfg).is_err());
        assert!(project_action(&[0.0, f64::INFINITY, 0.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn step_zero_case() {
        let cfg = SystemConfig { arrival_rate_bps: 0.0, ..Default::default() };
        let mut rng = seeded(3);
        let s = SystemState { h0: 1.0, h1: 1.0, h_eh: 1.0, ..Default::default() };
        let out = step(&s, &ControlAction::default(), &task(), &cfg, &mut rng).unwrap();
        assert_eq!(out.next_state.q0, 0.0);
        assert_eq!(out.next_state.q1, 0.0);
        assert_eq!(out.next_state.b, 0.0);
        assert_eq!(out.reward, cfg.penalty_nu * cfg.battery_capacity_j);
    }

    #[test]
    fn step_pure_harvest_adds_energy() {
        let cfg = SystemConfig::default();
        let t = task();
        let mut rng = seeded(4);
        let s = SystemState { b: 1.0, h0: 0.5, h1: 0.7, h_eh: 1.3, ..Default::default() };
        let a = ControlAction::new(0.0, 0.0, 0.0, 1.0, &cfg).unwrap();
        let out = step(&s, &a, &t, &cfg, &mut rng).unwrap();
        let expected = t.lambda_eff * cfg.p0_max_w * 1.3 * cfg.slot_duration_s;
        assert_relative_eq!(out.harvested_energy, expected, max_relative = 1e-15);
        assert_relative_eq!(out.next_state.b, 1.0 + expected, max_relative = 1e-15);
    }

    #[test]
    fn step_is_deterministic_and_rejects_infeasible() {
        let cfg = SystemConfig::default();
        let s = SystemState { q0: 500.0, q1: 20.0, b: 0.3, h0: 1.0, h1: 0.2, h_eh: 0.9 };
        let a = project_action(&[0.3, -1.0, 0.5, 0.1], &cfg).unwrap();
        let x = step(&s, &a, &task(), &cfg, &mut seeded(9)).unwrap();
        let y = step(&s, &a, &task(), &cfg, &mut seeded(9)).unwrap();
        assert_eq!(x, y);
        let bad = ControlAction { p0: 0.01, alpha0: 0.6, alpha1: 0.6, alpha_eh: 0.0 };
        assert!(step(&s, &bad, &task(), &cfg, &mut seeded(9)).is_err());
    }

    #[test]
    fn battery_clip_option() {
        let cfg = SystemConfig { battery_clip: true, ..Default::default() };
        let s = SystemState { b: 4.99, h_eh: 10.0, ..Default::default() };
        let a = ControlAction::new(0.0, 0.0, 0.0, 1.0, &cfg).unwrap();
        let out = step(&s, &a, &task(), &cfg, &mut seeded(1)).unwrap();
        assert_eq!(out.next_state.b, cfg.battery_capacity_j);
    }

    #[test]
    fn plant_holds_gains_within_coherence_block() {
        let cfg = SystemConfig { coherence_slots: 3, ..Default::default() };
        let mut rng = seeded(5);
        let mut plant = Plant::new(task(), cfg.clone(), &mut rng).unwrap();
        let a = project_action(&[0.0; 4], &cfg).unwrap();
        let g0 = plant.state.h0;
        plant.advance(&a, &mut rng).unwrap();
        assert_eq!(plant.state.h0, g0);
        plant.advance(&a, &mut rng).unwrap();
        plant.advance(&a, &mut rng).unwrap();
        assert_ne!(plant.state.h0, g0);
    }

    #[test]
    fn task_schedule() {
        let s = make_task_schedule(500, 2);
        assert_eq!(s[0], 0..500);
        let s = make_task_schedule(1, 3);
        assert_eq!(s, vec![0..1, 1..2, 2..3]);
        let s = make_task_schedule(7, 5);
        let covered: Vec<usize> = s.iter().flat_map(|r| r.clone()).collect();
        assert_eq!(covered, (0..35).collect::<Vec<_>>());
    }
}
