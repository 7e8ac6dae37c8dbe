//! Experiment drivers: repeated seeded runs of a scenario, the static versus
//! adaptive comparison, and the solve-time scaling sweep. Outputs are CSV and
//! JSON files ready for plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::allocation::SolverOptions;
use crate::orchestrator::{BoundMode, Fleet, MetricsLog, ModelCache, OrchestratorError, RunParams};
use crate::scenario::Scenario;

/// Episodes per iteration at desk scale.
pub const DESK_EPISODES: usize = 500;
/// Iterations at desk scale.
pub const DESK_ITERATIONS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("iteration {iteration}: {source}")]
    Run {
        iteration: usize,
        source: OrchestratorError,
    },
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("writing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl HarnessError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, HarnessError::Run { source, .. } if source.is_infeasible())
    }
}

/// Run settings layered over a scenario's own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub episodes: usize,
    pub iterations: usize,
    pub seed: u64,
    pub mode: BoundMode,
    pub record_bounds: bool,
}

impl RunConfig {
    /// The scenario's episode count, iteration count and seed.
    pub fn from_scenario(scn: &Scenario) -> Self {
        RunConfig {
            episodes: scn.params.episodes,
            iterations: scn.params.iterations,
            seed: scn.params.seed,
            mode: BoundMode::Adaptive,
            record_bounds: false,
        }
    }

    pub fn desk(seed: u64) -> Self {
        RunConfig {
            episodes: DESK_EPISODES,
            iterations: DESK_ITERATIONS,
            seed,
            mode: BoundMode::Adaptive,
            record_bounds: false,
        }
    }

    /// Seed of iteration `i`; iterations get disjoint random streams.
    pub fn iteration_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }

    pub fn params(&self, scn: &Scenario, iteration: usize) -> RunParams {
        let p = &scn.params;
        RunParams {
            episodes: self.episodes,
            seed: self.iteration_seed(iteration),
            mode: self.mode,
            alpha: p.alpha,
            gamma: p.gamma,
            z: p.z,
            data_threshold: p.data_threshold,
            explore_initial: p.explore_initial,
            explore_final: p.explore_final,
            solver: SolverOptions {
                starts: p.solver_starts,
                seed: self.iteration_seed(iteration),
                ..SolverOptions::default()
            },
            record_bounds: self.record_bounds,
        }
    }
}

/// Runs `cfg.iterations` independent iterations, one after another.
pub fn run_iterations(scn: &Scenario, cfg: &RunConfig) -> Result<Vec<MetricsLog>, HarnessError> {
    let mut cache = ModelCache::default();
    (0..cfg.iterations)
        .map(|iteration| {
            let params = cfg.params(scn, iteration);
            Fleet::with_cache(&scn.grid, &scn.tasks, &params, &mut cache)
                .and_then(|mut fleet| fleet.run(&params))
                .map_err(|source| HarnessError::Run { iteration, source })
        })
        .collect()
}

/// Results of one bound mode over all iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub mode: BoundMode,
    pub logs: Vec<MetricsLog>,
}

impl ModeReport {
    /// Per-task satisfaction rate averaged over iterations.
    pub fn mean_rates(&self) -> Vec<f64> {
        mean_rows(self.logs.iter().map(MetricsLog::satisfaction_rates))
    }

    /// Rate of episodes where at least one of `tasks` was satisfied, averaged
    /// over iterations.
    pub fn mean_any_rate(&self, tasks: &[usize]) -> f64 {
        mean(self.logs.iter().map(|l| l.any_satisfied_rate(tasks)))
    }

    pub fn mean_total_reward(&self) -> f64 {
        mean(self.logs.iter().map(MetricsLog::total_reward))
    }

    /// Share of episodes each robot spent on each task (null task last),
    /// averaged over iterations.
    pub fn mean_shares(&self) -> Vec<Vec<f64>> {
        let per_iter: Vec<Vec<Vec<f64>>> = self.logs.iter().map(MetricsLog::assignment_shares).collect();
        let robots = per_iter.first().map_or(0, Vec::len);
        (0..robots)
            .map(|i| mean_rows(per_iter.iter().map(|s| s[i].clone())))
            .collect()
    }

    pub fn mean_solve_seconds(&self) -> f64 {
        mean(self.logs.iter().map(MetricsLog::mean_solve_seconds))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_rows(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for row in rows {
        if acc.is_empty() {
            acc = vec![0.0; row.len()];
        }
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        n += 1;
    }
    acc.iter().map(|a| a / n.max(1) as f64).collect()
}

/// Static versus adaptive bounds on the same scenario and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Case1Report {
    pub tasks: Vec<String>,
    pub thresholds: Vec<f64>,
    pub adaptive: ModeReport,
    pub static_only: ModeReport,
}

pub fn run_case1(scn: &Scenario, cfg: &RunConfig) -> Result<Case1Report, HarnessError> {
    let mut modes = [BoundMode::Adaptive, BoundMode::StaticOnly].into_iter().map(|mode| {
        let cfg = RunConfig { mode, ..cfg.clone() };
        run_iterations(scn, &cfg).map(|logs| ModeReport { mode, logs })
    });
    let adaptive = modes.next().unwrap()?;
    let static_only = modes.next().unwrap()?;
    Ok(Case1Report {
        tasks: scn.tasks.iter().map(|t| t.name.clone()).collect(),
        thresholds: scn.tasks.iter().map(|t| t.threshold).collect(),
        adaptive,
        static_only,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub robots: usize,
    /// Allocation columns, null task included.
    pub tasks: usize,
    pub episodes: usize,
    pub mean_solve_seconds: f64,
    pub max_solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case2Report {
    /// Robot count sweep with the scenario's own tasks.
    pub by_robots: Vec<TimingRow>,
    /// Task count sweep at a fixed robot count.
    pub by_tasks: Vec<TimingRow>,
}

/// Solve-time scaling: each multiplier repeats the scenario's robots, each
/// task count cycles through its tasks with `sweep_robots` robots. Every
/// configuration runs one iteration of `cfg.episodes` episodes.
pub fn run_case2(
    scn: &Scenario,
    cfg: &RunConfig,
    multipliers: &[usize],
    task_counts: &[usize],
    sweep_robots: usize,
) -> Result<Case2Report, HarnessError> {
    let cfg = RunConfig {
        iterations: 1,
        ..cfg.clone()
    };
    let time = |s: &Scenario| -> Result<TimingRow, HarnessError> {
        let log = run_iterations(s, &cfg)?.remove(0);
        let summary = log.summary();
        Ok(TimingRow {
            robots: s.grid.robots.len(),
            tasks: s.tasks.len() + 1,
            episodes: log.episodes.len(),
            mean_solve_seconds: summary.mean_solve_seconds,
            max_solve_seconds: summary.max_solve_seconds,
        })
    };
    let by_robots = multipliers
        .iter()
        .map(|&m| time(&scn.replicate_robots(m)))
        .collect::<Result<_, _>>()?;
    let base = scn.with_robot_count(sweep_robots);
    let by_tasks = task_counts
        .iter()
        .map(|&k| time(&base.with_task_count(k)))
        .collect::<Result<_, _>>()?;
    Ok(Case2Report { by_robots, by_tasks })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, String), HarnessError> {
    let path = dir.join(name);
    let shown = path.display().to_string();
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let file = File::create(&path).map_err(|source| HarnessError::Io {
        path: shown.clone(),
        source,
    })?;
    Ok((BufWriter::new(file), shown))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), HarnessError> {
    let (mut w, path) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| HarnessError::Json {
        path: path.clone(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| HarnessError::Io { path, source })
}

fn write_csv<F>(dir: &Path, name: &str, header: &[&str], fill: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut csv::Writer<BufWriter<File>>) -> csv::Result<()>,
{
    let (w, path) = create(dir, name)?;
    let mut w = csv::Writer::from_writer(w);
    let wrap = |source| HarnessError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(header).map_err(wrap)?;
    fill(&mut w).map_err(wrap)?;
    w.flush().map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })
}

/// Writes `iter<N>_tasks.csv`, `iter<N>_robots.csv`, `iter<N>_solver.csv`,
/// `iter<N>_bounds.csv` (when bounds were recorded) and `summary.json`.
pub fn write_run(dir: &Path, logs: &[MetricsLog]) -> Result<(), HarnessError> {
    for (i, log) in logs.iter().enumerate() {
        let orch = |name: String, r: Result<(), OrchestratorError>| {
            r.map_err(|e| match e {
                OrchestratorError::Csv(source) => HarnessError::Csv { path: name.clone(), source },
                OrchestratorError::Io(source) => HarnessError::Io { path: name.clone(), source },
                other => HarnessError::Run {
                    iteration: i,
                    source: other,
                },
            })
        };
        let (w, path) = create(dir, &format!("iter{i}_tasks.csv"))?;
        orch(path, log.write_task_csv(w))?;
        let (w, path) = create(dir, &format!("iter{i}_robots.csv"))?;
        orch(path, log.write_robot_csv(w))?;
        let (w, path) = create(dir, &format!("iter{i}_solver.csv"))?;
        orch(path, log.write_solver_csv(w))?;
        if !log.bounds.is_empty() {
            let (w, path) = create(dir, &format!("iter{i}_bounds.csv"))?;
            orch(path, log.write_bounds_csv(w))?;
        }
    }
    let summaries: Vec<_> = logs.iter().map(MetricsLog::summary).collect();
    write_json(dir, "summary.json", &summaries)
}

fn mode_name(mode: BoundMode) -> &'static str {
    match mode {
        BoundMode::Adaptive => "adaptive",
        BoundMode::StaticOnly => "static",
    }
}

/// Writes the comparison tables:
///
/// - `case1_rates.csv`: `mode,iteration,task,rate,threshold`
/// - `case1_reward.csv`: `mode,iteration,episode,cumulative_reward`
/// - `case1_robot_counts.csv`: `mode,iteration,episode,task,robots`
/// - `case1_shares.csv`: `mode,robot,task,share` averaged over iterations
/// - `case1_summary.json`
pub fn write_case1(dir: &Path, report: &Case1Report) -> Result<(), HarnessError> {
    let modes = [&report.adaptive, &report.static_only];
    let task_name = |k: usize| report.tasks.get(k).cloned().unwrap_or_else(|| "null".into());
    write_csv(dir, "case1_rates.csv", &["mode", "iteration", "task", "rate", "threshold"], |w| {
        for m in modes {
            for (it, log) in m.logs.iter().enumerate() {
                for (k, rate) in log.satisfaction_rates().iter().enumerate() {
                    w.write_record([
                        mode_name(m.mode).to_string(),
                        it.to_string(),
                        task_name(k),
                        format!("{rate:.6}"),
                        report.thresholds[k].to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    })?;
    write_csv(dir, "case1_reward.csv", &["mode", "iteration", "episode", "cumulative_reward"], |w| {
        for m in modes {
            for (it, log) in m.logs.iter().enumerate() {
                for (e, r) in log.cumulative_reward().iter().enumerate() {
                    w.write_record([
                        mode_name(m.mode).to_string(),
                        it.to_string(),
                        e.to_string(),
                        format!("{r:.6}"),
                    ])?;
                }
            }
        }
        Ok(())
    })?;
    write_csv(dir, "case1_robot_counts.csv", &["mode", "iteration", "episode", "task", "robots"], |w| {
        for m in modes {
            for (it, log) in m.logs.iter().enumerate() {
                for (e, counts) in log.robot_counts().iter().enumerate() {
                    for (k, c) in counts.iter().enumerate() {
                        w.write_record([
                            mode_name(m.mode).to_string(),
                            it.to_string(),
                            e.to_string(),
                            task_name(k),
                            c.to_string(),
                        ])?;
                    }
                }
            }
        }
        Ok(())
    })?;
    write_csv(dir, "case1_shares.csv", &["mode", "robot", "task", "share"], |w| {
        for m in modes {
            for (i, row) in m.mean_shares().iter().enumerate() {
                for (k, s) in row.iter().enumerate() {
                    w.write_record([
                        mode_name(m.mode).to_string(),
                        (i + 1).to_string(),
                        task_name(k),
                        format!("{s:.6}"),
                    ])?;
                }
            }
        }
        Ok(())
    })?;

    #[derive(Serialize)]
    struct ModeSummary {
        mode: BoundMode,
        iterations: usize,
        mean_rates: Vec<f64>,
        mean_total_reward: f64,
        mean_solve_seconds: f64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        tasks: &'a [String],
        thresholds: &'a [f64],
        modes: Vec<ModeSummary>,
    }
    let summary = Summary {
        tasks: &report.tasks,
        thresholds: &report.thresholds,
        modes: modes
            .iter()
            .map(|m| ModeSummary {
                mode: m.mode,
                iterations: m.logs.len(),
                mean_rates: m.mean_rates(),
                mean_total_reward: m.mean_total_reward(),
                mean_solve_seconds: m.mean_solve_seconds(),
            })
            .collect(),
    };
    write_json(dir, "case1_summary.json", &summary)
}

/// Writes `case2_timing.csv` (`sweep,robots,tasks,episodes,mean_solve_seconds,max_solve_seconds`)
/// and `case2_summary.json`.
pub fn write_case2(dir: &Path, report: &Case2Report) -> Result<(), HarnessError> {
    write_csv(
        dir,
        "case2_timing.csv",
        &["sweep", "robots", "tasks", "episodes", "mean_solve_seconds", "max_solve_seconds"],
        |w| {
            for (sweep, rows) in [("robots", &report.by_robots), ("tasks", &report.by_tasks)] {
                for r in rows {
                    w.write_record([
                        sweep.to_string(),
                        r.robots.to_string(),
                        r.tasks.to_string(),
                        r.episodes.to_string(),
                        format!("{:.6}", r.mean_solve_seconds),
                        format!("{:.6}", r.max_solve_seconds),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    write_json(dir, "case2_summary.json", report)
}
