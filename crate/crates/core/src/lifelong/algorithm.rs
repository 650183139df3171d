use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kb::{refit_kb, task_statistics, update_statistics, KnowledgeBase};
use super::lasso::{encode_task, LassoSettings, TaskEncoding};
use super::pinv::DEFAULT_RCOND;
use super::{LifelongError, Result};
use crate::env::TaskProfile;
use crate::rl::{estimate_curvature, train_task, EpisodeSampler, PolicyParams, RlHyperparams};
use crate::rng::{substream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifelongHyperparams {
    /// Sparsity weight of the task encoding.
    pub mu1: f64,
    /// Basis regularization; `0` refits with the pseudoinverse, `> 0` with ridge.
    pub mu2: f64,
    pub eta: f64,
    pub latent_dim: usize,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub rcond: f64,
    pub g_init_range: f64,
    /// Policy-gradient updates used to fit each training task.
    pub task_iterations: usize,
    /// Policy-gradient updates spent probing an unseen task before encoding it.
    pub probe_budget: usize,
}

impl Default for LifelongHyperparams {
    fn default() -> Self {
        Self {
            mu1: 0.01,
            mu2: 0.01,
            eta: 0.1,
            latent_dim: 4,
            lasso_tol: 1e-8,
            lasso_max_iter: 100_000,
            rcond: DEFAULT_RCOND,
            g_init_range: 0.1,
            task_iterations: 300,
            probe_budget: 5,
        }
    }
}

impl LifelongHyperparams {
    pub fn lasso(&self) -> LassoSettings {
        LassoSettings { mu1: self.mu1, tol: self.lasso_tol, max_iter: self.lasso_max_iter }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LifelongError::InvalidArgument(m.to_string()));
        if !(self.mu1 >= 0.0) || !(self.mu2 >= 0.0) {
            return bad("mu1 and mu2 must be >= 0");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if self.latent_dim == 0 || self.task_iterations == 0 || self.probe_budget == 0 {
            return bad("latent_dim, task_iterations and probe_budget must be >= 1");
        }
        if !(self.lasso_tol > 0.0) || self.lasso_max_iter == 0 {
            return bad("lasso_tol must be > 0 and lasso_max_iter >= 1");
        }
        Ok(())
    }
}

/// Encodes, tolerating a solver that ran out of sweeps by keeping its best iterate.
fn encode_or_best(
    beta: &DVector<f64>,
    q: &nalgebra::DMatrix<f64>,
    g: &nalgebra::DMatrix<f64>,
    settings: &LassoSettings,
) -> Result<TaskEncoding> {
    match encode_task(beta, q, g, settings) {
        Ok(enc) => Ok(enc),
        Err(LifelongError::NotConverged { best, residual }) => {
            warn!("task encoding stopped with KKT residual {residual:.3e}; keeping best iterate");
            Ok(*best)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub theta_init: PolicyParams,
    pub encoding: TaskEncoding,
    /// Returns observed during the probe, one per update.
    pub probe_curve: Vec<f64>,
}

/// Initializes a policy for an unseen task from a frozen knowledge base.
///
/// Starting from `G v_bar` (the mean training encoding), a short probe of
/// `probe_budget` gradient steps yields rough `beta` and `Q` estimates; the
/// task is encoded against `G` and the policy restarted at `G v`.
pub fn warm_start<E: EpisodeSampler>(
    kb: &KnowledgeBase,
    probe_budget: usize,
    sampler: &E,
    rl: &RlHyperparams,
    lasso: &LassoSettings,
    rng: &mut SimRng,
) -> Result<WarmStart> {
    if kb.tasks_seen == 0 {
        return Err(LifelongError::Untrained);
    }
    if probe_budget == 0 {
        return Err(LifelongError::InvalidArgument("probe_budget must be >= 1".into()));
    }
    let n_actions = sampler.n_actions();
    let n_features = sampler.n_features();
    if kb.dim() != n_actions * n_features {
        return Err(LifelongError::Dimension(format!(
            "basis has {} rows, policy needs {}",
            kb.dim(),
            n_actions * n_features
        )));
    }
    let start = PolicyParams::with_theta(&kb.g * kb.mean_encoding(), n_actions, n_features, rl.log_std)?;
    let probe = train_task(sampler, &start, rl, probe_budget, rng)?;
    let curvature = estimate_curvature(sampler, &probe.beta, rl, rng)?;
    let encoding = encode_or_best(&probe.beta.theta, &curvature.q, &kb.g, lasso)?;
    let theta_init = PolicyParams::with_theta(&kb.g * &encoding.v, n_actions, n_features, rl.log_std)?;
    Ok(WarmStart { theta_init, encoding, probe_curve: probe.return_curve })
}

/// What one training task contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: usize,
    pub encoding: TaskEncoding,
    pub beta: DVector<f64>,
    pub return_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtL2rlOutcome {
    pub kb: KnowledgeBase,
    pub tasks: Vec<TaskReport>,
    /// Tasks that failed, with the reason; the stream continued past them.
    pub skipped: Vec<(usize, String)>,
}

fn learn_one<E: EpisodeSampler>(
    kb: &mut KnowledgeBase,
    sampler: &E,
    rl: &RlHyperparams,
    hyper: &LifelongHyperparams,
    rng: &mut SimRng,
) -> Result<(TaskEncoding, DVector<f64>, Vec<f64>)> {
    let init = PolicyParams::zeros(sampler.n_features(), sampler.n_actions(), rl.log_std);
    let fitted = train_task(sampler, &init, rl, hyper.task_iterations, rng)?;
    let curvature = estimate_curvature(sampler, &fitted.beta, rl, rng)?;
    let beta = fitted.beta.theta;
    let encoding = encode_or_best(&beta, &curvature.q, &kb.g, &hyper.lasso())?;
    let (xj, yj) = task_statistics(&encoding.v, &beta);
    update_statistics(kb, &xj, &yj)?;
    refit_kb(kb, hyper.mu2, hyper.rcond)?;
    kb.encodings.push(encoding.v.clone());
    Ok((encoding, beta, fitted.return_curve))
}

/// Learns the knowledge base over a stream of tasks, one task at a time.
///
/// Each task is fit from scratch, its curvature estimated, encoded against
/// the current basis, folded into the running statistics, and the basis
/// refit. Task `j` draws from substream `train/<j>` of `master_seed`; the
/// basis initialization from `g-init`.
pub fn run_mt_l2rl<E, F>(
    tasks: &[TaskProfile],
    make_sampler: F,
    rl: &RlHyperparams,
    hyper: &LifelongHyperparams,
    master_seed: u64,
) -> Result<MtL2rlOutcome>
where
    E: EpisodeSampler,
    F: Fn(&TaskProfile) -> E,
{
    if tasks.is_empty() {
        return Err(LifelongError::InvalidArgument("task stream is empty".into()));
    }
    hyper.validate()?;
    rl.validate()?;
    let first = make_sampler(&tasks[0]);
    let dim = first.n_features() * first.n_actions();
    let mut kb = KnowledgeBase::new(dim, hyper.latent_dim, hyper.eta, hyper.g_init_range, &mut substream(master_seed, "g-init"))?;
    let mut reports = Vec::with_capacity(tasks.len());
    let mut skipped = Vec::new();

    for (j, task) in tasks.iter().enumerate() {
        let sampler = make_sampler(task);
        let mut rng = substream(master_seed, &format!("train/{j}"));
        let mut candidate = kb.clone();
        match learn_one(&mut candidate, &sampler, rl, hyper, &mut rng) {
            Ok((encoding, beta, return_curve)) if candidate.is_finite() => {
                info!(
                    "task {} (#{j}): final return {:.5}, {} active atoms",
                    task.task_id,
                    return_curve.last().copied().unwrap_or(f64::NAN),
                    encoding.active_set.len()
                );
                kb = candidate;
                reports.push(TaskReport { task_id: task.task_id, encoding, beta, return_curve });
            }
            Ok(_) => {
                warn!("task {} skipped: knowledge base became non-finite", task.task_id);
                skipped.push((task.task_id, "non-finite knowledge base".to_string()));
            }
            Err(e) => {
                warn!("task {} skipped: {e}", task.task_id);
                skipped.push((task.task_id, e.to_string()));
            }
        }
    }
    Ok(MtL2rlOutcome { kb, tasks: reports, skipped })
}
