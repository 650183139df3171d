use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pinv::pinv;
use super::{LifelongError, Result};
use crate::rng::SimRng;

/// Shared latent policy basis and the running statistics it is refit from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// `d x Z` basis; task policies are `theta = G v`.
    pub g: DMatrix<f64>,
    /// `Z x Z` running average of `v v'`.
    pub x: DMatrix<f64>,
    /// `d x Z` running average of `beta v'`.
    pub y: DMatrix<f64>,
    pub eta: f64,
    pub tasks_seen: usize,
    /// Encodings of the training tasks in arrival order.
    pub encodings: Vec<DVector<f64>>,
}

impl KnowledgeBase {
    /// Basis entries uniform on `[-init_range, init_range]`, zero statistics.
    pub fn new(dim: usize, latent_dim: usize, eta: f64, init_range: f64, rng: &mut SimRng) -> Result<Self> {
        if dim == 0 || latent_dim == 0 {
            return Err(LifelongError::InvalidArgument("basis dimensions must be >= 1".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(LifelongError::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
        }
        let g = if init_range > 0.0 {
            DMatrix::from_fn(dim, latent_dim, |_, _| rng.random_range(-init_range..=init_range))
        } else {
            DMatrix::zeros(dim, latent_dim)
        };
        Ok(Self {
            g,
            x: DMatrix::zeros(latent_dim, latent_dim),
            y: DMatrix::zeros(dim, latent_dim),
            eta,
            tasks_seen: 0,
            encodings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().chain(self.x.iter()).chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// Mean of the stored training encodings, or zero if there are none.
    pub fn mean_encoding(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.latent_dim());
        if self.encodings.is_empty() {
            return mean;
        }
        for v in &self.encodings {
            mean += v;
        }
        mean / self.encodings.len() as f64
    }
}

/// `X^j = v v'` and `Y^j = beta v'`.
pub fn task_statistics(v: &DVector<f64>, beta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (v * v.transpose(), beta * v.transpose())
}

/// Exponential moving average of both statistics.
pub fn update_statistics(kb: &mut KnowledgeBase, xj: &DMatrix<f64>, yj: &DMatrix<f64>) -> Result<()> {
    if xj.shape() != kb.x.shape() || yj.shape() != kb.y.shape() {
        return Err(LifelongError::Dimension(format!(
            "statistics {:?}/{:?} do not match {:?}/{:?}",
            xj.shape(),
            yj.shape(),
            kb.x.shape(),
            kb.y.shape()
        )));
    }
    let eta = kb.eta;
    kb.x = &kb.x * (1.0 - eta) + xj * eta;
    kb.y = &kb.y * (1.0 - eta) + yj * eta;
    kb.tasks_seen += 1;
    Ok(())
}

/// Refits the basis from the statistics.
///
/// With `mu2 == 0` this is `G = Y X^+`, the minimum-norm minimizer of
/// `|Y - G X|_F`. With `mu2 > 0` it is the ridge solution `G = Y (X + mu2 I)^-1`.
pub fn refit_kb(kb: &mut KnowledgeBase, mu2: f64, rcond: f64) -> Result<()> {
    if kb.tasks_seen == 0 {
        return Err(LifelongError::Untrained);
    }
    if !(mu2 >= 0.0 && mu2.is_finite()) {
        return Err(LifelongError::InvalidArgument(format!("mu2 must be >= 0, got {mu2}")));
    }
    kb.g = if mu2 == 0.0 {
        &kb.y * pinv(&kb.x, rcond)
    } else {
        let z = kb.latent_dim();
        let reg = (&kb.x + &kb.x.transpose()) * 0.5 + DMatrix::identity(z, z) * mu2;
        let chol = reg
            .cholesky()
            .ok_or_else(|| LifelongError::InvalidArgument("regularized statistics are not positive definite".into()))?;
        // G' = (X + mu2 I)^-1 Y'
        chol.solve(&kb.y.transpose()).transpose()
    };
    Ok(())
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::{prop_assert, proptest};

    proptest! {
        #[test]
        fn repeated_task_pulls_statistics_geometrically(seed in 0u64..1000, eta in 0.05..0.9f64, k in 1i32..15) {
            let mut rng = seeded(seed);
            let mut kb = KnowledgeBase::new(4, 2, eta, 0.1, &mut rng).unwrap();
            kb.x = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            kb.y = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let (x0, y0) = (kb.x.clone(), kb.y.clone());
            let (xj, yj) = task_statistics(
                &DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                &DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
            );
            for _ in 0..k {
                update_statistics(&mut kb, &xj, &yj).unwrap();
            }
            let decay = (1.0 - eta).powi(k);
            prop_assert!((&kb.x - &xj - (&x0 - &xj) * decay).amax() <= 1e-12);
            prop_assert!((&kb.y - &yj - (&y0 - &yj) * decay).amax() <= 1e-12);
        }

        #[test]
        fn pinv_refit_is_a_least_squares_minimizer(seed in 0u64..1000, tasks in 1usize..6) {
            let mut rng = seeded(seed);
            let mut kb = KnowledgeBase::new(5, 3, 0.3, 0.1, &mut rng).unwrap();
            for _ in 0..tasks {
                let (xj, yj) = task_statistics(
                    &DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)),
                    &DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
                );
                update_statistics(&mut kb, &xj, &yj).unwrap();
            }
            refit_kb(&mut kb, 0.0, 1e-10).unwrap();
            let base = (&kb.y - &kb.g * &kb.x).norm();
            for _ in 0..20 {
                let delta = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1e-3..1e-3));
                prop_assert!((&kb.y - (&kb.g + delta) * &kb.x).norm() >= base - 1e-12);
            }
        }
    }
}
