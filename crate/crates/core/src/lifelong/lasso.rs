//! Sparse task encoding: `min_v (beta - G v)' Q (beta - G v) + mu1 |v|_1`.
//!
//! With `A = G'QG` and `c = G'Q beta` the smooth part is
//! `v'Av - 2c'v + beta'Q beta`, so one coordinate step is a soft threshold
//! at `mu1 / 2` divided by `A_ii`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{LifelongError, Result};

// Tolerated negative eigenvalue of the weighting matrix.
const PSD_TOL: f64 = 1e-8;
// Per-coordinate curvature floor for atoms that Q cannot see.
const CURVATURE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEncoding {
    pub v: DVector<f64>,
    pub objective_value: f64,
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    pub mu1: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self { mu1: 0.01, tol: 1e-8, max_iter: 100_000 }
    }
}

/// Objective value at `v`.
pub fn encoding_objective(beta: &DVector<f64>, q: &DMatrix<f64>, g: &DMatrix<f64>, v: &DVector<f64>, mu1: f64) -> f64 {
    let r = beta - g * v;
    r.dot(&(q * &r)) + mu1 * v.lp_norm(1)
}

/// Largest violation of the subgradient optimality conditions at `v`.
pub fn kkt_violation(beta: &DVector<f64>, q: &DMatrix<f64>, g: &DMatrix<f64>, v: &DVector<f64>, mu1: f64) -> f64 {
    let a = g.transpose() * q * g;
    let c = g.transpose() * (q * beta);
    kkt_from_normal(&a, &c, v, mu1)
}

fn kkt_from_normal(a: &DMatrix<f64>, c: &DVector<f64>, v: &DVector<f64>, mu1: f64) -> f64 {
    let smooth = (a * v - c) * 2.0;
    smooth
        .iter()
        .zip(v.iter())
        .map(|(&gi, &vi)| {
            if vi != 0.0 {
                (gi + mu1 * vi.signum()).abs()
            } else {
                (gi.abs() - mu1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn check_inputs(beta: &DVector<f64>, q: &DMatrix<f64>, g: &DMatrix<f64>, mu1: f64) -> Result<()> {
    let d = beta.len();
    if q.nrows() != d || q.ncols() != d || g.nrows() != d {
        return Err(LifelongError::Dimension(format!(
            "beta {d}, Q {}x{}, G {}x{}",
            q.nrows(),
            q.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    if !(mu1 >= 0.0 && mu1.is_finite()) {
        return Err(LifelongError::InvalidArgument(format!("mu1 must be >= 0, got {mu1}")));
    }
    if beta.iter().chain(q.iter()).chain(g.iter()).any(|x| !x.is_finite()) {
        return Err(LifelongError::InvalidArgument("non-finite encoding input".into()));
    }
    let sym = (q + q.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if min_eig < -PSD_TOL {
        return Err(LifelongError::NotPsd(min_eig));
    }
    Ok(())
}

/// Cyclic coordinate descent on the encoding objective.
pub fn encode_task(
    beta: &DVector<f64>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    settings: &LassoSettings,
) -> Result<TaskEncoding> {
    encode_task_traced(beta, q, g, settings, None)
}

/// As [`encode_task`], optionally recording the objective after every sweep.
pub fn encode_task_traced(
    beta: &DVector<f64>,
    q: &DMatrix<f64>,
    g: &DMatrix<f64>,
    settings: &LassoSettings,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<TaskEncoding> {
    let mu1 = settings.mu1;
    check_inputs(beta, q, g, mu1)?;
    let z = g.ncols();
    let a = g.transpose() * q * g;
    let c = g.transpose() * (q * beta);
    let finish = |v: DVector<f64>| {
        let objective_value = encoding_objective(beta, q, g, &v, mu1);
        let active_set = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect();
        TaskEncoding { v, objective_value, active_set }
    };

    let mut v = DVector::zeros(z);
    // The residual correlation a*v - c, kept in sync with v.
    let mut av = DVector::zeros(z);
    if kkt_from_normal(&a, &c, &v, mu1) <= settings.tol {
        return Ok(finish(v));
    }
    for _ in 0..settings.max_iter {
        for i in 0..z {
            let aii = a[(i, i)].max(CURVATURE_FLOOR);
            let partial = c[i] - (av[i] - a[(i, i)] * v[i]);
            let new = soft_threshold(partial, mu1 / 2.0) / aii;
            let delta = new - v[i];
            if delta != 0.0 {
                av.axpy(delta, &a.column(i), 1.0);
                v[i] = new;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(encoding_objective(beta, q, g, &v, mu1));
        }
        if kkt_from_normal(&a, &c, &v, mu1) <= settings.tol {
            return Ok(finish(v));
        }
    }
    let residual = kkt_from_normal(&a, &c, &v, mu1);
    Err(LifelongError::NotConverged { best: Box::new(finish(v)), residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, SimRng};
    use rand::Rng;

    fn random_instance(rng: &mut SimRng, d: usize, z: usize) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let beta = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = &b * b.transpose() + DMatrix::identity(d, d) * 0.05;
        let g = DMatrix::from_fn(d, z, |_, _| rng.random_range(-1.0..1.0));
        (beta, q, g)
    }

    #[test]
    fn identity_fit_without_penalty_recovers_beta() {
        let beta = DVector::from_vec(vec![1.5, -0.25, 3.0, 0.0]);
        let i = DMatrix::identity(4, 4);
        let enc = encode_task(&beta, &i, &i, &LassoSettings { mu1: 0.0, tol: 1e-12, max_iter: 100 }).unwrap();
        assert!((enc.v - &beta).amax() < 1e-12);
        assert_eq!(enc.active_set, vec![0, 1, 2]);
    }

    #[test]
    fn large_penalty_shuts_every_atom_off() {
        let (beta, q, g) = random_instance(&mut seeded(1), 6, 3);
        let bound = 2.0 * (g.transpose() * (&q * &beta)).amax();
        let enc = encode_task(&beta, &q, &g, &LassoSettings { mu1: bound, tol: 1e-10, max_iter: 100 }).unwrap();
        assert_eq!(enc.v, DVector::zeros(3));
        assert!(enc.active_set.is_empty());
    }

    #[test]
    fn rejects_indefinite_weighting() {
        let beta = DVector::from_vec(vec![1.0, 1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = DMatrix::identity(2, 2);
        let err = encode_task(&beta, &q, &g, &LassoSettings::default()).unwrap_err();
        assert!(matches!(err, LifelongError::NotPsd(_)));
    }

    #[test]
    fn reports_best_iterate_when_out_of_sweeps() {
        let (beta, q, g) = random_instance(&mut seeded(2), 8, 5);
        let err = encode_task(&beta, &q, &g, &LassoSettings { mu1: 1e-3, tol: 1e-14, max_iter: 1 }).unwrap_err();
        match err {
            LifelongError::NotConverged { best, residual } => {
                assert_eq!(best.v.len(), 5);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dead_atom_stays_at_zero() {
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let q = DMatrix::identity(2, 2);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let enc = encode_task(&beta, &q, &g, &LassoSettings { mu1: 0.1, tol: 1e-12, max_iter: 100 }).unwrap();
        assert_eq!(enc.v[1], 0.0);
        assert!((enc.v[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn objective_value_matches_reevaluation() {
        let (beta, q, g) = random_instance(&mut seeded(3), 7, 4);
        let s = LassoSettings { mu1: 0.3, tol: 1e-9, max_iter: 10_000 };
        let enc = encode_task(&beta, &q, &g, &s).unwrap();
        assert!((enc.objective_value - encoding_objective(&beta, &q, &g, &enc.v, 0.3)).abs() < 1e-9);
        assert!(kkt_violation(&beta, &q, &g, &enc.v, 0.3) <= 1e-9);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn instance() -> impl Strategy<Value = (DVector<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
        (2usize..6, 1usize..5, 0usize..3).prop_flat_map(|(d, z, drop)| {
            let rank = d.saturating_sub(drop).max(1);
            (
                prop::collection::vec(-2.0..2.0f64, d),
                prop::collection::vec(-1.0..1.0f64, d * rank),
                prop::collection::vec(-1.0..1.0f64, d * z),
                0.0..1.0f64,
            )
                .prop_map(move |(b, f, g, mu1)| {
                    let f = DMatrix::from_vec(d, rank, f);
                    (DVector::from_vec(b), &f * f.transpose(), DMatrix::from_vec(d, z, g), mu1)
                })
        })
    }

    proptest! {
        #[test]
        fn solution_satisfies_optimality_and_sweeps_never_increase((beta, q, g, mu1) in instance()) {
            let mut trace = Vec::new();
            let s = LassoSettings { mu1, tol: 1e-9, max_iter: 200_000 };
            let enc = encode_task_traced(&beta, &q, &g, &s, Some(&mut trace)).unwrap();
            prop_assert!(kkt_violation(&beta, &q, &g, &enc.v, mu1) <= 1e-6);
            let mut prev = encoding_objective(&beta, &q, &g, &DVector::zeros(g.ncols()), mu1);
            for o in trace {
                prop_assert!(o <= prev + 1e-12 * prev.abs().max(1.0));
                prev = o;
            }
        }
    }

    #[test]
    fn two_atom_instance_matches_grid_search() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.9]);
        let beta = DVector::from_vec(vec![0.7, -0.4]);
        let mu1 = 0.2;
        let enc = encode_task(&beta, &q, &g, &LassoSettings { mu1, tol: 1e-12, max_iter: 10_000 }).unwrap();
        let (mut best, mut arg) = (f64::INFINITY, (0.0, 0.0));
        for i in 0..=800 {
            for j in 0..=800 {
                let v = DVector::from_vec(vec![-2.0 + i as f64 * 5e-3, -2.0 + j as f64 * 5e-3]);
                let r = &beta - &g * &v;
                let o = (r.transpose() * &q * &r)[(0, 0)] + mu1 * v.abs().sum();
                if o < best {
                    best = o;
                    arg = (v[0], v[1]);
                }
            }
        }
        assert!((enc.v[0] - arg.0).abs() <= 5e-3 && (enc.v[1] - arg.1).abs() <= 5e-3, "{} vs {arg:?}", enc.v);
    }
}
