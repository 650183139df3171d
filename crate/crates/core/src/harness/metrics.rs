use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use super::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MtL2rl,
    VanillaRl,
    Lyapunov,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MtL2rl, Method::VanillaRl, Method::Lyapunov];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::MtL2rl => "mt-l2rl",
            Method::VanillaRl => "vanilla-rl",
            Method::Lyapunov => "lyapunov",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Trailing moving average; the first `window - 1` points average what is available.
pub fn smooth(curve: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    for (i, v) in curve.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= curve[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// First iteration whose smoothed return reaches `fraction` of the final
/// smoothed return, or `curve.len()` if it never does.
///
/// "Reaching" means `>= final - (1 - fraction) * |final|`, which is
/// `fraction * final` for positive finals and tolerant of negative ones.
pub fn convergence_iteration(curve: &[f64], fraction: f64, window: usize) -> Result<usize> {
    if curve.is_empty() {
        return Err(HarnessError::Metric("empty curve".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(HarnessError::Metric(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let smoothed = smooth(curve, window);
    let last = *smoothed.last().expect("non-empty");
    let threshold = last - (1.0 - fraction) * last.abs();
    Ok(smoothed.iter().position(|s| *s >= threshold).unwrap_or(curve.len()))
}

/// Mean of the last `window` points.
pub fn final_return(curve: &[f64], window: usize) -> f64 {
    let n = window.clamp(1, curve.len().max(1));
    curve[curve.len().saturating_sub(n)..].iter().sum::<f64>() / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub task_id: usize,
    pub seed: u64,
    pub curve: Vec<f64>,
    pub wall_clock_s: f64,
    pub convergence_iteration: usize,
    /// Environment episodes consumed, including probe and curvature rollouts.
    pub episodes: usize,
    pub error: Option<String>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub n_runs: usize,
    pub failed_runs: usize,
    pub mean_convergence_iteration: f64,
    pub std_convergence_iteration: f64,
    pub mean_final_return: f64,
    pub std_final_return: f64,
    /// Mean over every recorded iteration of every run.
    pub mean_return: f64,
    pub mean_episodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: usize,
    pub methods: BTreeMap<Method, MethodStats>,
    /// `(conv_vanilla + 1) / (conv_mt + 1)` on seed-averaged iterations.
    pub speedup_vs_vanilla: f64,
    pub speedup_vs_lyapunov: f64,
    /// `100 * (1 - conv_mt / conv_vanilla)`.
    pub faster_pct_vs_vanilla: f64,
    pub mt_converges_faster_than_vanilla: bool,
    /// Final MT return at least the controller's mean per-slot reward.
    pub mt_final_at_least_lyapunov: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub convergence_fraction: f64,
    pub smoothing_window: usize,
    pub tasks: Vec<TaskSummary>,
    pub mean_speedup_vs_vanilla: f64,
    pub tasks_faster_than_vanilla: usize,
    pub tasks_at_least_lyapunov: usize,
    /// Published range of convergence gains against the baselines, in percent.
    pub reference_faster_pct: [f64; 2],
}

impl Summary {
    pub fn from_records(records: &[RunRecord], fraction: f64, window: usize) -> Result<Self> {
        let mut by_task: BTreeMap<usize, BTreeMap<Method, Vec<&RunRecord>>> = BTreeMap::new();
        for r in records {
            by_task.entry(r.task_id).or_default().entry(r.method).or_default().push(r);
        }
        let mut tasks = Vec::new();
        for (task_id, methods) in by_task {
            let mut stats = BTreeMap::new();
            for (method, runs) in methods {
                let ok: Vec<&&RunRecord> = runs.iter().filter(|r| r.error.is_none() && !r.curve.is_empty()).collect();
                let conv: Vec<f64> = ok
                    .iter()
                    .map(|r| convergence_iteration(&r.curve, fraction, window).map(|c| c as f64))
                    .collect::<Result<_>>()?;
                let finals: Vec<f64> = ok.iter().map(|r| final_return(&r.curve, window)).collect();
                let all: Vec<f64> = ok.iter().flat_map(|r| r.curve.iter().copied()).collect();
                let episodes: Vec<f64> = ok.iter().map(|r| r.episodes as f64).collect();
                let (mc, sc) = mean_std(&conv);
                let (mf, sf) = mean_std(&finals);
                stats.insert(
                    method,
                    MethodStats {
                        n_runs: runs.len(),
                        failed_runs: runs.len() - ok.len(),
                        mean_convergence_iteration: mc,
                        std_convergence_iteration: sc,
                        mean_final_return: mf,
                        std_final_return: sf,
                        mean_return: mean_std(&all).0,
                        mean_episodes: mean_std(&episodes).0,
                    },
                );
            }
            let conv = |m: Method| stats.get(&m).map(|s| s.mean_convergence_iteration).unwrap_or(f64::NAN);
            let (mt, van, lyap) = (conv(Method::MtL2rl), conv(Method::VanillaRl), conv(Method::Lyapunov));
            let mt_final = stats.get(&Method::MtL2rl).map(|s| s.mean_final_return).unwrap_or(f64::NAN);
            let lyap_mean = stats.get(&Method::Lyapunov).map(|s| s.mean_return).unwrap_or(f64::NAN);
            tasks.push(TaskSummary {
                task_id,
                speedup_vs_vanilla: (van + 1.0) / (mt + 1.0),
                speedup_vs_lyapunov: (lyap + 1.0) / (mt + 1.0),
                faster_pct_vs_vanilla: if van > 0.0 { 100.0 * (1.0 - mt / van) } else { 0.0 },
                mt_converges_faster_than_vanilla: mt < van,
                mt_final_at_least_lyapunov: mt_final >= lyap_mean,
                methods: stats,
            });
        }
        let speedups: Vec<f64> = tasks.iter().map(|t| t.speedup_vs_vanilla).collect();
        Ok(Summary {
            convergence_fraction: fraction,
            smoothing_window: window,
            mean_speedup_vs_vanilla: mean_std(&speedups).0,
            tasks_faster_than_vanilla: tasks.iter().filter(|t| t.mt_converges_faster_than_vanilla).count(),
            tasks_at_least_lyapunov: tasks.iter().filter(|t| t.mt_final_at_least_lyapunov).count(),
            reference_faster_pct: [30.0, 60.0],
            tasks,
        })
    }
}
