//! The coordinator loop: before every episode collect each robot's rewards and
//! bounds, solve the allocation (adaptive bounds first, static bounds as a
//! fallback), let every robot execute, and log the outcome.
//!
//! Robots run one after another inside an episode. Each robot owns its random
//! stream, so the order does not affect the results.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;

use serde::Serialize;

use crate::agent::{Agent, AgentConfig, AgentError, AgentStats, EpisodeRecord, TaskModel};
use crate::allocation::{
    allocate_with_fallback, solve_allocation_with, task_probabilities, AllocationError,
    AllocationInput, SolverOptions,
};
use crate::automata::{compile_dfa, DfaError};
use crate::bounds::BoundSource;
use crate::clock::Stopwatch;
use crate::learning::ExplorationSchedule;
use crate::mdp::{build_gridworld, build_robot_model, GridScenario, MdpError, RobotKind};
use crate::twtl::{time_bound, Formula};

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("scenario has no tasks")]
    NoTasks,
    #[error("scenario has no robots")]
    NoRobots,
    #[error("robot {robot} cannot start at ({x},{y})")]
    BadStart { robot: usize, x: u32, y: u32 },
    #[error("episode {episode}: {source}")]
    Allocation {
        episode: usize,
        source: AllocationError,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("task {task}: {source}")]
    Dfa { task: usize, source: DfaError },
    #[error("writing metrics: {0}")]
    Io(#[from] io::Error),
    #[error("writing metrics: {0}")]
    Csv(#[from] csv::Error),
}

impl OrchestratorError {
    /// True when the run stopped because no feasible allocation exists.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Allocation {
                source: AllocationError::Infeasible | AllocationError::StaticInfeasible,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub formula: Formula,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Adaptive bounds with static fallback.
    Adaptive,
    /// Static bounds only.
    StaticOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub episodes: usize,
    pub seed: u64,
    pub mode: BoundMode,
    pub alpha: f64,
    pub gamma: f64,
    pub z: f64,
    pub data_threshold: u64,
    pub explore_initial: f64,
    pub explore_final: f64,
    pub solver: SolverOptions,
    /// Keep per-robot, per-task bound rows in the log.
    pub record_bounds: bool,
}

/// Robots, tasks and episode length, with offline products and policies built.
pub struct Fleet {
    pub tasks: Vec<Task>,
    pub horizon: u32,
    pub agents: Vec<Agent>,
    pub kinds: Vec<RobotKind>,
}

type ModelKey = (RobotKind, u64, Vec<(String, u64)>, usize);

/// Shared offline artefacts, keyed by robot model and task. Only valid for
/// fleets built on the same grid and task list.
#[derive(Default)]
pub struct ModelCache {
    models: BTreeMap<ModelKey, Arc<TaskModel>>,
}

impl ModelCache {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Episode length: the longest time bound among the tasks.
pub fn episode_length(tasks: &[Task]) -> u32 {
    tasks.iter().map(|t| time_bound(&t.formula)).max().unwrap_or(0)
}

impl Fleet {
    pub fn new(scn: &GridScenario, tasks: &[Task], params: &RunParams) -> Result<Fleet, OrchestratorError> {
        Fleet::with_cache(scn, tasks, params, &mut ModelCache::default())
    }

    /// Like [`Fleet::new`], reusing products and policies from `cache`.
    pub fn with_cache(
        scn: &GridScenario,
        tasks: &[Task],
        params: &RunParams,
        cache: &mut ModelCache,
    ) -> Result<Fleet, OrchestratorError> {
        if tasks.is_empty() {
            return Err(OrchestratorError::NoTasks);
        }
        if scn.robots.is_empty() {
            return Err(OrchestratorError::NoRobots);
        }
        scn.validate()?;
        let horizon = episode_length(tasks);
        let config = AgentConfig {
            alpha: params.alpha,
            gamma: params.gamma,
            z: params.z,
            data_threshold: params.data_threshold,
            horizon,
            exploration: ExplorationSchedule::new(
                params.explore_initial,
                params.explore_final,
                params.episodes as u64,
            ),
        };
        let mut dfas = Vec::with_capacity(tasks.len());
        for (k, t) in tasks.iter().enumerate() {
            dfas.push(compile_dfa(&t.formula).map_err(|source| OrchestratorError::Dfa { task: k, source })?);
        }
        let mut agents = Vec::with_capacity(scn.robots.len());
        for (i, spec) in scn.robots.iter().enumerate() {
            let world = build_gridworld(scn, i)?;
            let (x, y) = spec.start;
            let start = world
                .state_at(x, y)
                .ok_or(OrchestratorError::BadStart { robot: i, x, y })?;
            let mut model = None;
            let rewards: Vec<(String, u64)> = spec
                .rewards
                .iter()
                .map(|(k, v)| (k.clone(), v.to_bits()))
                .collect();
            let mut models = Vec::with_capacity(tasks.len());
            for (k, dfa) in dfas.iter().enumerate() {
                let key = (spec.kind, spec.uncertainty.eps_est.to_bits(), rewards.clone(), k);
                if let Some(m) = cache.models.get(&key) {
                    models.push(Arc::clone(m));
                    continue;
                }
                if model.is_none() {
                    model = Some(build_robot_model(scn, i)?);
                }
                let m = Arc::new(TaskModel::build(
                    &model.as_ref().unwrap().mdp,
                    dfa.clone(),
                    spec.uncertainty.eps_est,
                    horizon,
                )?);
                cache.models.insert(key, Arc::clone(&m));
                models.push(m);
            }
            agents.push(Agent::new(
                i,
                Arc::new(world.mdp),
                models,
                start,
                config.clone(),
                params.seed,
            ));
        }
        Ok(Fleet {
            tasks: tasks.to_vec(),
            horizon,
            kinds: scn.robots.iter().map(|r| r.kind).collect(),
            agents,
        })
    }

    pub fn stats(&self) -> Vec<AgentStats> {
        self.agents.iter().map(Agent::stats).collect()
    }

    /// Runs `params.episodes` coordinated episodes.
    pub fn run(&mut self, params: &RunParams) -> Result<MetricsLog, OrchestratorError> {
        let k = self.tasks.len();
        let thresholds: Vec<f64> = self.tasks.iter().map(|t| t.threshold).collect();
        let mut log = MetricsLog {
            tasks: self.tasks.iter().map(|t| t.name.clone()).collect(),
            thresholds: thresholds.clone(),
            robots: self.agents.len(),
            horizon: self.horizon,
            mode: params.mode,
            episodes: Vec::with_capacity(params.episodes),
            bounds: Vec::new(),
        };
        for episode in 0..params.episodes {
            let stats = self.stats();
            let values: Vec<Vec<f64>> = stats.iter().map(|s| s.values.clone()).collect();
            let adaptive: Vec<Vec<f64>> = stats.iter().map(|s| s.adaptive_bounds.clone()).collect();
            let fixed: Vec<Vec<f64>> = stats.iter().map(|s| s.static_bounds.clone()).collect();
            let clock = Stopwatch::start();
            let solved = match params.mode {
                BoundMode::Adaptive => {
                    allocate_with_fallback(&values, &adaptive, &fixed, &thresholds, &params.solver)
                }
                BoundMode::StaticOnly => AllocationInput::new(values.clone(), fixed.clone(), thresholds.clone())
                    .and_then(|input| solve_allocation_with(&input, &params.solver))
                    .map(|s| (s, BoundSource::Static))
                    .map_err(|e| match e {
                        AllocationError::Infeasible => AllocationError::StaticInfeasible,
                        e => e,
                    }),
            };
            let solve_seconds = clock.elapsed().as_secs_f64();
            let (solution, source) =
                solved.map_err(|source| OrchestratorError::Allocation { episode, source })?;
            let used = match source {
                BoundSource::Confidence => &adaptive,
                BoundSource::Static => &fixed,
            };
            let modeled = task_probabilities(&solution.matrix, used, k);

            if params.record_bounds {
                for (i, s) in stats.iter().enumerate() {
                    for task in 0..k {
                        log.bounds.push(BoundRow {
                            episode,
                            robot: i,
                            task,
                            init_state: self.agents[i].model(task).product.initial(self.agents[i].state()),
                            static_bound: s.static_bounds[task],
                            confidence: (s.sources[task] == BoundSource::Confidence)
                                .then_some(s.adaptive_bounds[task]),
                            adaptive: s.adaptive_bounds[task],
                            source: s.sources[task],
                            episodes: s.tallies[task].episodes(),
                        });
                    }
                }
            }

            let mut records = Vec::with_capacity(self.agents.len());
            for (i, agent) in self.agents.iter_mut().enumerate() {
                records.push(agent.execute(solution.matrix.row(i))?);
            }
            let satisfied = (0..k)
                .map(|task| records.iter().any(|r| r.task == task && r.satisfied == Some(true)))
                .collect();
            log.episodes.push(EpisodeLog {
                episode,
                source,
                solve_seconds,
                solver_iterations: solution.iterations,
                solver_start: solution.start,
                objective: solution.objective,
                modeled,
                satisfied,
                allocation: solution.matrix.rows().to_vec(),
                records,
            });
        }
        Ok(log)
    }

    /// Hook for re-planning after a robot failure. Failures are not simulated,
    /// so this does nothing.
    pub fn replan_after_failure(&mut self, _robot: usize) {}
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Bound set that produced the allocation.
    pub source: BoundSource,
    pub solve_seconds: f64,
    pub solver_iterations: usize,
    pub solver_start: usize,
    pub objective: f64,
    /// Satisfaction probability of each task implied by the allocation and the
    /// bounds it was solved with.
    pub modeled: Vec<f64>,
    /// Per task: did at least one robot that drew it satisfy it.
    pub satisfied: Vec<bool>,
    pub allocation: Vec<Vec<f64>>,
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub episode: usize,
    pub robot: usize,
    pub task: usize,
    pub init_state: u32,
    pub static_bound: f64,
    pub confidence: Option<f64>,
    pub adaptive: f64,
    pub source: BoundSource,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLog {
    pub tasks: Vec<String>,
    pub thresholds: Vec<f64>,
    pub robots: usize,
    pub horizon: u32,
    pub mode: BoundMode,
    pub episodes: Vec<EpisodeLog>,
    pub bounds: Vec<BoundRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: BoundMode,
    pub episodes: usize,
    pub robots: usize,
    pub horizon: u32,
    pub tasks: Vec<String>,
    pub thresholds: Vec<f64>,
    pub satisfaction_rates: Vec<f64>,
    pub total_reward: f64,
    pub mean_solve_seconds: f64,
    pub max_solve_seconds: f64,
    pub static_fallbacks: usize,
    /// Row per robot: share of episodes spent on each task, null task last.
    pub assignment_shares: Vec<Vec<f64>>,
}

impl MetricsLog {
    /// Fraction of episodes in which each task was satisfied by some robot.
    pub fn satisfaction_rates(&self) -> Vec<f64> {
        let n = self.episodes.len().max(1) as f64;
        (0..self.tasks.len())
            .map(|k| self.episodes.iter().filter(|e| e.satisfied[k]).count() as f64 / n)
            .collect()
    }

    /// Fraction of episodes in which at least one of `tasks` was satisfied.
    pub fn any_satisfied_rate(&self, tasks: &[usize]) -> f64 {
        let n = self.episodes.len().max(1) as f64;
        self.episodes
            .iter()
            .filter(|e| tasks.iter().any(|&k| e.satisfied[k]))
            .count() as f64
            / n
    }

    /// Team reward summed over episodes, after each episode.
    pub fn cumulative_reward(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.episodes
            .iter()
            .map(|e| {
                total += e.records.iter().map(|r| r.reward).sum::<f64>();
                total
            })
            .collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.cumulative_reward().last().copied().unwrap_or(0.0)
    }

    /// Number of robots that drew each task (null task last), per episode.
    pub fn robot_counts(&self) -> Vec<Vec<usize>> {
        self.episodes
            .iter()
            .map(|e| {
                let mut counts = vec![0; self.tasks.len() + 1];
                for r in &e.records {
                    counts[r.task] += 1;
                }
                counts
            })
            .collect()
    }

    /// Share of episodes each robot spent on each task, null task last.
    pub fn assignment_shares(&self) -> Vec<Vec<f64>> {
        let n = self.episodes.len().max(1) as f64;
        let mut shares = vec![vec![0.0; self.tasks.len() + 1]; self.robots];
        for e in &self.episodes {
            for (i, r) in e.records.iter().enumerate() {
                shares[i][r.task] += 1.0 / n;
            }
        }
        shares
    }

    pub fn mean_solve_seconds(&self) -> f64 {
        let n = self.episodes.len().max(1) as f64;
        self.episodes.iter().map(|e| e.solve_seconds).sum::<f64>() / n
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mode: self.mode,
            episodes: self.episodes.len(),
            robots: self.robots,
            horizon: self.horizon,
            tasks: self.tasks.clone(),
            thresholds: self.thresholds.clone(),
            satisfaction_rates: self.satisfaction_rates(),
            total_reward: self.total_reward(),
            mean_solve_seconds: self.mean_solve_seconds(),
            max_solve_seconds: self
                .episodes
                .iter()
                .map(|e| e.solve_seconds)
                .fold(0.0, f64::max),
            static_fallbacks: self
                .episodes
                .iter()
                .filter(|e| self.mode == BoundMode::Adaptive && e.source == BoundSource::Static)
                .count(),
            assignment_shares: self.assignment_shares(),
        }
    }

    /// One row per episode and task:
    /// `episode,task,satisfied,modeled,threshold,robots_assigned,source`.
    pub fn write_task_csv<W: io::Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "episode",
            "task",
            "satisfied",
            "modeled",
            "threshold",
            "robots_assigned",
            "source",
        ])?;
        for (e, counts) in self.episodes.iter().zip(self.robot_counts()) {
            for k in 0..self.tasks.len() {
                w.write_record([
                    e.episode.to_string(),
                    self.tasks[k].clone(),
                    u8::from(e.satisfied[k]).to_string(),
                    format!("{:.6}", e.modeled[k]),
                    self.thresholds[k].to_string(),
                    counts[k].to_string(),
                    source_name(e.source).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per episode: `episode,source,iterations,start,objective,solve_seconds`.
    /// Only the last column depends on the machine.
    pub fn write_solver_csv<W: io::Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "source", "iterations", "start", "objective", "solve_seconds"])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                source_name(e.source).to_string(),
                e.solver_iterations.to_string(),
                e.solver_start.to_string(),
                format!("{:.6}", e.objective),
                format!("{:.6}", e.solve_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per episode and robot:
    /// `episode,robot,task,satisfied,reward,start_state,end_state,p_task...`.
    pub fn write_robot_csv<W: io::Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["episode", "robot", "task", "satisfied", "reward", "start_state", "end_state"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.tasks.iter().map(|t| format!("p_{t}")));
        header.push("p_null".into());
        w.write_record(&header)?;
        for e in &self.episodes {
            for (i, r) in e.records.iter().enumerate() {
                let mut row = vec![
                    e.episode.to_string(),
                    (i + 1).to_string(),
                    self.task_name(r.task),
                    match r.satisfied {
                        Some(s) => u8::from(s).to_string(),
                        None => String::new(),
                    },
                    format!("{:.6}", r.reward),
                    r.start.to_string(),
                    r.end.to_string(),
                ];
                row.extend(e.allocation[i].iter().map(|p| format!("{p:.6}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per episode, robot and TWTL task:
    /// `episode,robot,task,init_state,static,confidence,adaptive,source,episodes`.
    pub fn write_bounds_csv<W: io::Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "episode",
            "robot",
            "task",
            "init_state",
            "static",
            "confidence",
            "adaptive",
            "source",
            "episodes",
        ])?;
        for b in &self.bounds {
            w.write_record([
                b.episode.to_string(),
                (b.robot + 1).to_string(),
                self.tasks[b.task].clone(),
                b.init_state.to_string(),
                format!("{:.6}", b.static_bound),
                b.confidence.map(|c| format!("{c:.6}")).unwrap_or_default(),
                format!("{:.6}", b.adaptive),
                source_name(b.source).to_string(),
                b.episodes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn task_name(&self, k: usize) -> String {
        self.tasks.get(k).cloned().unwrap_or_else(|| "null".to_string())
    }
}

fn source_name(s: BoundSource) -> &'static str {
    match s {
        BoundSource::Static => "static",
        BoundSource::Confidence => "confidence",
    }
}
