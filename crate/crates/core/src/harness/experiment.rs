use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::metrics::{convergence_iteration, Method, RunRecord, Summary};
use super::persist::{curves_to_csv, kb_digest, load_kb, read_curves, read_json, save_kb, write_atomic, write_json};
use super::tasks::generate_training_tasks;
use super::{HarnessError, Result};
use crate::baselines::{run_lyapunov, vanilla_rl};
use crate::env::TaskProfile;
use crate::lifelong::{run_mt_l2rl, warm_start, KnowledgeBase, MtL2rlOutcome};
use crate::rl::{train_task, EpisodeSampler, WsnEpisodes};
use crate::rng::substream;

pub const KB_FILE: &str = "kb.bin";
pub const TRAINING_FILE: &str = "training.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const RUNS_FILE: &str = "runs.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MEAN_CURVES_FILE: &str = "mean_curves.csv";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedTask {
    pub task_id: usize,
    pub zeta_eh: f64,
    pub lambda_eff: f64,
    pub final_return: f64,
    pub active_set: Vec<usize>,
    pub encoding: Vec<f64>,
}

/// Digest of what training produced, written next to the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub master_seed: u64,
    pub kb_digest: String,
    pub tasks: Vec<TrainedTask>,
    pub skipped: Vec<(usize, String)>,
}

pub struct Training {
    pub tasks: Vec<TaskProfile>,
    pub outcome: MtL2rlOutcome,
}

impl Training {
    pub fn report(&self, master_seed: u64) -> TrainingReport {
        let profile = |id: usize| self.tasks.iter().find(|t| t.task_id == id).expect("trained task exists");
        TrainingReport {
            master_seed,
            kb_digest: kb_digest(&self.outcome.kb),
            tasks: self
                .outcome
                .tasks
                .iter()
                .map(|r| TrainedTask {
                    task_id: r.task_id,
                    zeta_eh: profile(r.task_id).zeta_eh,
                    lambda_eff: profile(r.task_id).lambda_eff,
                    final_return: r.return_curve.last().copied().unwrap_or(f64::NAN),
                    active_set: r.encoding.active_set.clone(),
                    encoding: r.encoding.v.iter().copied().collect(),
                })
                .collect(),
            skipped: self.outcome.skipped.clone(),
        }
    }
}

fn sampler(cfg: &ExperimentConfig, task: &TaskProfile) -> WsnEpisodes {
    WsnEpisodes::new(*task, cfg.system.clone(), cfg.horizon)
}

/// Learns the knowledge base over freshly drawn training tasks.
pub fn run_training(cfg: &ExperimentConfig) -> Result<Training> {
    cfg.validate()?;
    let tasks =
        generate_training_tasks(cfg.n_training_tasks, &cfg.training_ranges, &mut substream(cfg.master_seed, "tasks"))?;
    let outcome = run_mt_l2rl(&tasks, |t| sampler(cfg, t), &cfg.rl, &cfg.lifelong, cfg.master_seed)?;
    if outcome.tasks.is_empty() {
        return Err(HarnessError::Config("every training task failed; nothing to transfer".into()));
    }
    info!("knowledge base learned from {} tasks ({} skipped)", outcome.tasks.len(), outcome.skipped.len());
    Ok(Training { tasks, outcome })
}

/// Records the exact configuration next to the artifacts it produced.
pub fn write_config(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml_string()?.as_bytes())
}

pub fn write_training(out: &Path, cfg: &ExperimentConfig, training: &Training) -> Result<()> {
    write_config(out, cfg)?;
    let ids: Vec<usize> = training.outcome.tasks.iter().map(|t| t.task_id).collect();
    save_kb(&out.join(KB_FILE), &training.outcome.kb, cfg.master_seed, &ids)?;
    write_json(&out.join(TRAINING_FILE), &training.report(cfg.master_seed))
}

/// One method on one test task under one seed.
pub fn run_single(cfg: &ExperimentConfig, kb: &KnowledgeBase, task: &TaskProfile, seed: u64, method: Method) -> RunRecord {
    let start = Instant::now();
    let env = sampler(cfg, task);
    let tag = format!("{}/{seed}", task.task_id);
    let n_traj = cfg.rl.n_trajectories;
    let iters = cfg.test_iterations;
    let result: Result<(Vec<f64>, usize)> = match method {
        Method::VanillaRl => {
            let mut rng = substream(cfg.master_seed, &format!("adapt/{tag}"));
            vanilla_rl(&env, &cfg.rl, iters, &mut rng).map(|c| (c, iters * n_traj)).map_err(Into::into)
        }
        Method::MtL2rl => (|| {
            let probe = cfg.lifelong.probe_budget;
            let mut probe_rng = substream(cfg.master_seed, &format!("probe/{tag}"));
            let ws = warm_start(kb, probe, &env, &cfg.rl, &cfg.lifelong.lasso(), &mut probe_rng)?;
            let mut rng = substream(cfg.master_seed, &format!("adapt/{tag}"));
            let adapted = train_task(&env, &ws.theta_init, &cfg.rl, iters - probe, &mut rng)?;
            let mut curve = ws.probe_curve;
            curve.extend(adapted.return_curve);
            let dim = env.n_features() * env.n_actions();
            Ok((curve, iters * n_traj + 2 * dim * cfg.rl.curvature_trajectories))
        })(),
        Method::Lyapunov => (|| {
            let mut rng = substream(cfg.master_seed, &format!("lyapunov/{tag}"));
            let curve = (0..cfg.lyapunov_episodes)
                .map(|_| run_lyapunov(task, &cfg.system, &cfg.lyapunov, cfg.horizon, &mut rng).map(|t| t.mean_reward()))
                .collect::<crate::env::Result<Vec<f64>>>()?;
            Ok((curve, cfg.lyapunov_episodes))
        })(),
    };
    let wall_clock_s = start.elapsed().as_secs_f64();
    match result {
        Ok((curve, episodes)) => {
            let conv = convergence_iteration(&curve, cfg.convergence_fraction, cfg.smoothing_window).unwrap_or(curve.len());
            RunRecord {
                method,
                task_id: task.task_id,
                seed,
                curve,
                wall_clock_s,
                convergence_iteration: conv,
                episodes,
                error: None,
            }
        }
        Err(e) => {
            warn!("{method} on task {} seed {seed} failed: {e}", task.task_id);
            RunRecord {
                method,
                task_id: task.task_id,
                seed,
                curve: Vec::new(),
                wall_clock_s,
                convergence_iteration: 0,
                episodes: 0,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Every (task, seed, method) run against a frozen knowledge base, in that
/// lexicographic order regardless of how rayon schedules them.
pub fn run_testing(cfg: &ExperimentConfig, kb: &KnowledgeBase) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let before = kb_digest(kb);
    let tasks = cfg.test_tasks()?;
    let jobs: Vec<(TaskProfile, u64, Method)> = tasks
        .iter()
        .flat_map(|t| cfg.seeds.iter().flat_map(move |&s| Method::ALL.into_iter().map(move |m| (*t, s, m))))
        .collect();
    let records: Vec<RunRecord> = jobs.par_iter().map(|(t, s, m)| run_single(cfg, kb, t, *s, *m)).collect();
    if kb_digest(kb) != before {
        return Err(HarnessError::KbMutated);
    }
    Ok(records)
}

/// Per-run bookkeeping that is not part of the curve itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: Method,
    pub task_id: usize,
    pub seed: u64,
    pub convergence_iteration: usize,
    pub episodes: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timing {
    method: Method,
    task_id: usize,
    seed: u64,
    wall_clock_s: f64,
}

fn mean_curves_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut groups: BTreeMap<(Method, usize), Vec<&[f64]>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        groups.entry((r.method, r.task_id)).or_default().push(&r.curve);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "task_id", "iteration", "mean_return", "std_return", "n_seeds"])?;
    for ((method, task_id), curves) in groups {
        let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        for i in 0..len {
            let xs: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            w.write_record([
                method.tag().to_string(),
                task_id.to_string(),
                i.to_string(),
                mean.to_string(),
                std.to_string(),
                xs.len().to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
}

/// Writes curves, run metadata, summary and seed-averaged curves. Wall-clock
/// times go to their own file so the others are reproducible byte for byte.
pub fn write_testing(out: &Path, cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<Summary> {
    write_config(out, cfg)?;
    let curves = curves_to_csv(records.iter().map(|r| ((r.method, r.task_id, r.seed), r.curve.as_slice())))?;
    write_atomic(&out.join(CURVES_FILE), &curves)?;
    let meta: Vec<RunMeta> = records
        .iter()
        .map(|r| RunMeta {
            method: r.method,
            task_id: r.task_id,
            seed: r.seed,
            convergence_iteration: r.convergence_iteration,
            episodes: r.episodes,
            error: r.error.clone(),
        })
        .collect();
    write_json(&out.join(RUNS_FILE), &meta)?;
    let timings: Vec<Timing> = records
        .iter()
        .map(|r| Timing { method: r.method, task_id: r.task_id, seed: r.seed, wall_clock_s: r.wall_clock_s })
        .collect();
    write_json(&out.join(TIMINGS_FILE), &timings)?;
    let summary = Summary::from_records(records, cfg.convergence_fraction, cfg.smoothing_window)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    write_atomic(&out.join(MEAN_CURVES_FILE), &mean_curves_csv(records)?)?;
    Ok(summary)
}

pub struct ExperimentOutcome {
    pub training: Training,
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Training, snapshot, reload, testing and reports, all under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let training = run_training(cfg)?;
    write_training(out, cfg, &training)?;
    // Test against the reloaded snapshot, so what was saved is what is tested.
    let (kb, _) = load_kb(&out.join(KB_FILE))?;
    if kb != training.outcome.kb {
        return Err(HarnessError::Snapshot("reloaded knowledge base differs from the trained one".into()));
    }
    let records = run_testing(cfg, &kb)?;
    let summary = write_testing(out, cfg, &records)?;
    Ok(ExperimentOutcome { training, records, summary })
}

/// Reassembles run records from the curves and run metadata in `dir`.
/// Wall-clock times are not restored.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let curves = read_curves(&dir.join(CURVES_FILE))?;
    let meta: Vec<RunMeta> = read_json(&dir.join(RUNS_FILE))?;
    let records: Vec<RunRecord> = meta
        .into_iter()
        .map(|m| RunRecord {
            curve: curves.get(&(m.method, m.task_id, m.seed)).cloned().unwrap_or_default(),
            method: m.method,
            task_id: m.task_id,
            seed: m.seed,
            wall_clock_s: 0.0,
            convergence_iteration: m.convergence_iteration,
            episodes: m.episodes,
            error: m.error,
        })
        .collect();
    Ok(records)
}

/// Rebuilds `summary.json` and `mean_curves.csv` in `dir` from its curves,
/// using the convergence settings of the saved `config.toml` if present.
pub fn report(dir: &Path) -> Result<Summary> {
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg = if cfg_path.exists() { ExperimentConfig::load(&cfg_path)? } else { ExperimentConfig::default() };
    let records = load_records(dir)?;
    let summary = Summary::from_records(&records, cfg.convergence_fraction, cfg.smoothing_window)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    write_atomic(&dir.join(MEAN_CURVES_FILE), &mean_curves_csv(&records)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn smoke_experiment_writes_every_artifact_and_reports_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::smoke();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        for f in [KB_FILE, TRAINING_FILE, CURVES_FILE, RUNS_FILE, SUMMARY_FILE, MEAN_CURVES_FILE, TIMINGS_FILE, CONFIG_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let n = cfg.test_profiles.len() * cfg.seeds.len() * Method::ALL.len();
        assert_eq!(out.records.len(), n);
        for r in &out.records {
            assert!(r.error.is_none(), "{:?}", r.error);
            let want = if r.method == Method::Lyapunov { cfg.lyapunov_episodes } else { cfg.test_iterations };
            assert_eq!(r.curve.len(), want);
        }
        let summary_bytes = std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        let mean_bytes = std::fs::read(dir.path().join(MEAN_CURVES_FILE)).unwrap();
        let again = report(dir.path()).unwrap();
        assert_eq!(again, out.summary);
        assert_eq!(std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap(), summary_bytes);
        assert_eq!(std::fs::read(dir.path().join(MEAN_CURVES_FILE)).unwrap(), mean_bytes);
    }

    #[test]
    fn testing_leaves_the_knowledge_base_untouched() {
        let cfg = ExperimentConfig { seeds: vec![3], test_profiles: ExperimentConfig::smoke().test_profiles[..1].to_vec(), ..ExperimentConfig::smoke() };
        let training = run_training(&cfg).unwrap();
        let kb = training.outcome.kb.clone();
        let bytes = crate::harness::persist::encode_kb(&kb, 0, &[]).unwrap();
        let a = run_testing(&cfg, &kb).unwrap();
        assert_eq!(crate::harness::persist::encode_kb(&kb, 0, &[]).unwrap(), bytes);
        let b = run_testing(&cfg, &kb).unwrap();
        let strip = |rs: &[RunRecord]| rs.iter().map(|r| (r.method, r.curve.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn untrained_knowledge_base_fails_only_the_lifelong_runs() {
        let cfg = ExperimentConfig::smoke();
        let kb = KnowledgeBase::new(28, 2, 0.1, 0.1, &mut seeded(0)).unwrap();
        let task = cfg.test_tasks().unwrap()[0];
        assert!(run_single(&cfg, &kb, &task, 0, Method::MtL2rl).error.is_some());
        assert!(run_single(&cfg, &kb, &task, 0, Method::VanillaRl).error.is_none());
    }
}
