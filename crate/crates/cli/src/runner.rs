//! Sweep execution: the (method, threshold, seed) cross product runs as
//! independent cells on a small worker pool. Each cell owns its output
//! subdirectory; aggregates and the summary are written after all cells
//! join, so the artifact tree is a pure function of the spec.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use spil_core::trainer::{evaluate_policy, initial_actor, train, TrainConfig, TrainError, TrainLog};

use crate::checkpoint::save_checkpoint;
use crate::csvio::{aggregate_to_csv, log_to_csv};
use crate::spec::ExperimentSpec;
use crate::CliError;

/// Summary record for one sweep cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub threshold: f64,
    pub seed: u64,
    pub ok: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Last logged evaluation safe probability, if any evaluation ran.
    pub final_eval_p_s: Option<f64>,
    pub final_eval_return: Option<f64>,
    /// Largest integrator value logged over the run.
    pub peak_integrator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Across-seed summary for one (method, threshold) group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupRecord {
    pub method: String,
    pub threshold: f64,
    pub seed_count: usize,
    pub ok_count: usize,
    /// Means over the seeds that finished and evaluated.
    pub mean_final_eval_p_s: Option<f64>,
    pub mean_final_eval_return: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellRecord>,
    pub groups: Vec<GroupRecord>,
}

pub struct ExperimentOutcome {
    pub summary: Summary,
    pub any_failed: bool,
}

/// Output subdirectory for one cell, relative to the sweep root.
pub fn cell_dir(root: &Path, method: &str, threshold: f64, seed: u64) -> PathBuf {
    root.join(method).join(format!("delta_{threshold}")).join(format!("seed_{seed}"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

struct CellOutput {
    record: CellRecord,
    log: Option<TrainLog>,
}

fn last_eval(log: &TrainLog) -> (Option<f64>, Option<f64>) {
    for r in log.rows.iter().rev() {
        if r.eval_p_s.is_some() {
            return (r.eval_p_s, r.eval_return);
        }
    }
    (None, None)
}

fn peak_integrator(log: &TrainLog) -> Option<f64> {
    log.rows.iter().map(|r| r.integrator).fold(None, |acc, v| {
        Some(match acc {
            None => v,
            Some(a) => a.max(v),
        })
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    root: &Path,
    method_idx: usize,
    threshold: f64,
    seed: u64,
) -> Result<CellOutput, CliError> {
    let method = &spec.methods[method_idx];
    let config = spec.cell_config(method, threshold, seed);
    let dir = cell_dir(root, &method.name, threshold, seed);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let (record, log) = match train(&config) {
        Ok(out) => {
            save_checkpoint(&dir.join("actor.json"), &out.actor)?;
            save_checkpoint(&dir.join("critic.json"), &out.critic)?;
            let (p, j) = last_eval(&out.log);
            (
                CellRecord {
                    method: method.name.clone(),
                    threshold,
                    seed,
                    ok: true,
                    converged: out.converged,
                    iterations: out.log.rows.len(),
                    final_eval_p_s: p,
                    final_eval_return: j,
                    peak_integrator: peak_integrator(&out.log),
                    error: None,
                },
                out.log,
            )
        }
        Err(TrainError::InvalidConfig(msg)) => {
            return Err(CliError::Spec(msg));
        }
        Err(TrainError::NumericFailure { iteration, log }) => (
            CellRecord {
                method: method.name.clone(),
                threshold,
                seed,
                ok: false,
                converged: false,
                iterations: log.rows.len(),
                final_eval_p_s: None,
                final_eval_return: None,
                peak_integrator: peak_integrator(&log),
                error: Some(format!("numeric failure at iteration {iteration}")),
            },
            log,
        ),
    };
    let csv_path = dir.join("log.csv");
    fs::write(&csv_path, log_to_csv(&log)).map_err(|e| io_err(&csv_path, e))?;
    Ok(CellOutput { record, log: Some(log) })
}

/// Run the full sweep with up to `workers` concurrent cells.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    workers: usize,
) -> Result<ExperimentOutcome, CliError> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    // flat deterministic cell order: method-major, then threshold, then seed
    let mut cells = Vec::new();
    for (mi, _) in spec.methods.iter().enumerate() {
        for &d in &spec.thresholds {
            for &s in &spec.seeds {
                cells.push((mi, d, s));
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellOutput, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let workers = workers.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (mi, d, s) = cells[i];
                let out = run_cell(spec, out_dir, mi, d, s);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let results = results.into_inner().unwrap();
    let mut records = Vec::with_capacity(cells.len());
    let mut logs: Vec<Option<TrainLog>> = Vec::with_capacity(cells.len());
    for r in results {
        match r.expect("worker pool completed every cell") {
            Ok(CellOutput { record, log }) => {
                records.push(record);
                logs.push(log);
            }
            Err(e) => return Err(e),
        }
    }

    if spec.aggregate.enabled {
        for (mi, m) in spec.methods.iter().enumerate() {
            for &d in &spec.thresholds {
                let group_logs: Vec<&TrainLog> = cells
                    .iter()
                    .zip(records.iter().zip(logs.iter()))
                    .filter(|((ci, cd, _), (rec, log))| {
                        *ci == mi && *cd == d && rec.ok && log.is_some()
                    })
                    .map(|(_, (_, log))| log.as_ref().unwrap())
                    .collect();
                let path = out_dir
                    .join(&m.name)
                    .join(format!("delta_{d}"))
                    .join("aggregate.csv");
                fs::write(&path, aggregate_to_csv(&group_logs)).map_err(|e| io_err(&path, e))?;
            }
        }
    }

    let mut groups = Vec::new();
    for m in &spec.methods {
        for &d in &spec.thresholds {
            let in_group: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.method == m.name && r.threshold == d)
                .collect();
            let evaluated: Vec<&&CellRecord> =
                in_group.iter().filter(|r| r.ok && r.final_eval_p_s.is_some()).collect();
            let mean = |f: fn(&CellRecord) -> Option<f64>| -> Option<f64> {
                if evaluated.is_empty() {
                    None
                } else {
                    Some(evaluated.iter().map(|r| f(r).unwrap()).sum::<f64>() / evaluated.len() as f64)
                }
            };
            groups.push(GroupRecord {
                method: m.name.clone(),
                threshold: d,
                seed_count: in_group.len(),
                ok_count: in_group.iter().filter(|r| r.ok).count(),
                mean_final_eval_p_s: mean(|r| r.final_eval_p_s),
                mean_final_eval_return: mean(|r| r.final_eval_return),
            });
        }
    }

    let any_failed = records.iter().any(|r| !r.ok);
    let summary = Summary { cells: records, groups };
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(ExperimentOutcome { summary, any_failed })
}

/// Order-preserving filter for seeds whose freshly initialized policy is
/// unsafe (evaluation p_s < 0.5) under the given config.
pub fn select_unsafe_seeds(candidates: &[u64], config: &TrainConfig) -> Vec<u64> {
    let mut out = Vec::new();
    for &seed in candidates {
        let mut c = config.clone();
        c.master_seed = seed;
        let actor = initial_actor(seed);
        if let Ok((p_s, _)) = evaluate_policy(&actor, &c, 0) {
            if p_s < 0.5 {
                out.push(seed);
            }
        }
    }
    out
}
