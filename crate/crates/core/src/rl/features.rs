use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::env::{rayleigh_mean, SystemConfig, SystemState};

/// Six normalized state variables plus a constant bias.
pub const N_FEATURES: usize = 7;

/// Scales that bring `(q0, q1, b, h0, h1, h_eh)` to unit order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub scales: [f64; 6],
}

impl FeatureMap {
    /// Queues by ten slots' worth of mean arrivals, battery by capacity, gains
    /// by their Rayleigh means. The harvesting gain uses `eh_reference_zeta`
    /// rather than the task's own scale so features do not leak the task.
    pub fn from_config(cfg: &SystemConfig, eh_reference_zeta: f64) -> Self {
        let queue = cfg.arrival_rate_bps * cfg.slot_duration_s * 10.0;
        let queue = if queue > 0.0 { queue } else { 1.0 };
        Self {
            scales: [
                queue,
                queue,
                cfg.battery_capacity_j,
                rayleigh_mean(cfg.zeta0),
                rayleigh_mean(cfg.zeta1),
                rayleigh_mean(eh_reference_zeta),
            ],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.scales.iter().all(|s| s.is_finite() && *s > 0.0)
    }

    pub fn features(&self, s: &SystemState) -> DVector<f64> {
        let raw = [s.q0, s.q1, s.b, s.h0, s.h1, s.h_eh];
        let mut f = DVector::from_element(N_FEATURES, 1.0);
        for (i, (v, scale)) in raw.iter().zip(self.scales.iter()).enumerate() {
            f[i] = v / scale;
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_scaled_with_bias_last() {
        let cfg = SystemConfig::default();
        let map = FeatureMap::from_config(&cfg, 1.0);
        assert!(map.is_valid());
        let s = SystemState { q0: 10_000.0, q1: 0.0, b: 2.5, h0: rayleigh_mean(1.0), h1: 0.0, h_eh: 0.0 };
        let f = map.features(&s);
        assert_eq!(f.len(), N_FEATURES);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[2], 0.5);
        assert!((f[3] - 1.0).abs() < 1e-15);
        assert_eq!(f[6], 1.0);
    }

    #[test]
    fn zero_arrival_rate_keeps_scales_positive() {
        let cfg = SystemConfig { arrival_rate_bps: 0.0, ..Default::default() };
        assert!(FeatureMap::from_config(&cfg, 1.0).is_valid());
    }
}
