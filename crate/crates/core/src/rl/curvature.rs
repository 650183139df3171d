use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::gradient::{estimate_policy_gradient, RlHyperparams};
use super::policy::PolicyParams;
use super::rollout::EpisodeSampler;
use super::{Result, RlError};
use crate::rng::{seeded, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    /// Negative Hessian of the expected return, symmetric and PSD.
    pub q: DMatrix<f64>,
    /// Whether any eigenvalue had to be raised to the floor.
    pub psd_projected: bool,
}

/// Symmetrizes `m` and raises its eigenvalues to at least `floor`.
pub fn project_psd(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    // Reconstruction round-off can break exact symmetry.
    ((&q + q.transpose()) * 0.5, true)
}

/// Estimates `Q = -Hessian` of the expected return at `beta` by central
/// differences of the policy gradient. Both sides of every difference replay
/// the same seed, so the sampling noise largely cancels.
pub fn estimate_curvature<E: EpisodeSampler>(
    sampler: &E,
    beta: &PolicyParams,
    hyper: &RlHyperparams,
    rng: &mut SimRng,
) -> Result<CurvatureEstimate> {
    let eps = hyper.curvature_epsilon;
    if !(eps > 0.0) {
        return Err(RlError::InvalidArgument("curvature epsilon must be > 0".into()));
    }
    let seed = rng.next_u64();
    let n = hyper.curvature_trajectories;
    let d = beta.dim();
    let mut hessian = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut plus = beta.clone();
        plus.theta[k] += eps;
        let mut minus = beta.clone();
        minus.theta[k] -= eps;
        let gp = estimate_policy_gradient(sampler, &plus, hyper, n, &mut seeded(seed))?;
        let gm = estimate_policy_gradient(sampler, &minus, hyper, n, &mut seeded(seed))?;
        hessian.set_column(k, &((gp.grad - gm.grad) / (2.0 * eps)));
    }
    let (q, psd_projected) = project_psd(&(-hessian), hyper.curvature_floor);
    Ok(CurvatureEstimate { q, psd_projected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_floors_eigenvalues_and_is_symmetric() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.5, -3.0, 0.2, 0.0, 0.1, 1.0]);
        let (q, projected) = project_psd(&m, 1e-6);
        assert!(projected);
        assert_eq!(q, q.transpose());
        let eig = SymmetricEigen::new(q).eigenvalues;
        assert!(eig.min() >= 1e-6 - 1e-12);
    }

    #[test]
    fn projection_keeps_psd_input() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (q, projected) = project_psd(&m, 1e-6);
        assert!(!projected);
        assert_eq!(q, m);
    }
}
