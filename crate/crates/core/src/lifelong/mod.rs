//! Lifelong learning over a shared latent policy basis.
//!
//! Each task's fitted policy `beta` is explained as `G v` with a sparse `v`
//! weighted by the task's curvature; running averages of `v v'` and
//! `beta v'` summarize all tasks seen so far, and the basis is refit from
//! them after every task. Unseen tasks start from a policy inside the span
//! of `G`.

mod algorithm;
mod kb;
mod lasso;
mod pinv;

use thiserror::Error;

use crate::rl::RlError;

pub use algorithm::{run_mt_l2rl, warm_start, LifelongHyperparams, MtL2rlOutcome, TaskReport, WarmStart};
pub use kb::{refit_kb, task_statistics, update_statistics, KnowledgeBase};
pub use lasso::{encode_task, encode_task_traced, encoding_objective, kkt_violation, LassoSettings, TaskEncoding};
pub use pinv::{pinv, DEFAULT_RCOND};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifelongError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weighting matrix is not PSD (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("coordinate descent did not converge (KKT residual {residual:.3e})")]
    NotConverged { best: Box<TaskEncoding>, residual: f64 },
    #[error("knowledge base has not seen any task")]
    Untrained,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LifelongError>;
