//! Per-robot episode execution: sample a task from the assignment, follow the
//! task's distance policy until the product reaches acceptance, and spend the
//! rest of the episode (or all of it, for the null task) on Q-learning.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::automata::{Dfa, DfaError};
use crate::bounds::{adaptive_bound, static_lower_bound, BoundSource, SatCounter, Tally};
use crate::learning::{ExplorationSchedule, QTable, ValueTable};
use crate::mdp::{LabeledMdp, MdpError, StateId};
use crate::synthesis::{
    build_product, compute_distance, synthesize_policy, Policy, ProductMdp, ProductState,
    SynthesisError,
};
use crate::twtl::Symbol;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("assignment has {got} entries, expected {expected}")]
    AssignmentShape { got: usize, expected: usize },
    #[error("assignment is not a probability distribution (sum {0})")]
    AssignmentNotStochastic(f64),
    #[error("robot {robot} moved to state {state}, which its model gives probability 0")]
    OutsideModel { robot: usize, state: StateId },
    #[error("robot {robot}, task {task}: product and automaton disagree on satisfaction")]
    Inconsistent { robot: usize, task: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Dfa(#[from] DfaError),
}

/// Offline artefacts for one task on one robot model: the product, the
/// distance policy and the static bound of every product state.
#[derive(Debug, Clone)]
pub struct TaskModel {
    pub dfa: Dfa,
    pub product: ProductMdp,
    pub policy: Policy,
    pub static_bounds: Vec<f64>,
}

impl TaskModel {
    /// Builds the product of `model` (the robot's own MDP, with slip bound
    /// `eps_est`) and `dfa`, then the policy and bounds over `horizon` steps.
    pub fn build(model: &LabeledMdp, dfa: Dfa, eps_est: f64, horizon: u32) -> Result<Self, AgentError> {
        let product = build_product(model, &dfa)?;
        let dist = compute_distance(&product, eps_est);
        let policy = synthesize_policy(&product, &dist, eps_est);
        let static_bounds = static_lower_bound(&product, &policy, eps_est, horizon);
        Ok(TaskModel {
            dfa,
            product,
            policy,
            static_bounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub z: f64,
    pub data_threshold: u64,
    /// Episode length in steps.
    pub horizon: u32,
    pub exploration: ExplorationSchedule,
}

#[derive(Debug, Clone)]
struct TaskState {
    model: Arc<TaskModel>,
    values: ValueTable,
    counter: SatCounter,
}

/// What the coordinator learns from a robot before allocating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentStats {
    /// Expected reward per task, null task last.
    pub values: Vec<f64>,
    pub static_bounds: Vec<f64>,
    pub adaptive_bounds: Vec<f64>,
    /// Which bound the adaptive entry came from, TWTL tasks only.
    pub sources: Vec<BoundSource>,
    /// Episode counts behind each TWTL task's confidence bound.
    pub tallies: Vec<Tally>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    /// Index of the executed task; the null task is `K`.
    pub task: usize,
    /// Whether the task was satisfied; `None` for the null task.
    pub satisfied: Option<bool>,
    /// Step at which the product first accepted.
    pub accepted_at: Option<u32>,
    pub reward: f64,
    pub steps: u32,
    pub start: StateId,
    pub end: StateId,
}

#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    world: Arc<LabeledMdp>,
    tasks: Vec<TaskState>,
    q: QTable,
    s0: StateId,
    rng: ChaCha8Rng,
    episode: u64,
    config: AgentConfig,
}

impl Agent {
    /// `world` is the simulator's MDP; `models` are built from the robot's own
    /// model, which must share states and supports with `world`. The random
    /// stream depends only on `(seed, id)`.
    pub fn new(
        id: usize,
        world: Arc<LabeledMdp>,
        models: Vec<Arc<TaskModel>>,
        start: StateId,
        config: AgentConfig,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        let tasks = models
            .into_iter()
            .map(|model| TaskState {
                values: ValueTable::new(model.product.num_states()),
                counter: SatCounter::default(),
                model,
            })
            .collect();
        Agent {
            id,
            q: QTable::new(&world),
            world,
            tasks,
            s0: start,
            rng,
            episode: 0,
            config,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn state(&self) -> StateId {
        self.s0
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn counter(&self, task: usize) -> &SatCounter {
        &self.tasks[task].counter
    }

    pub fn value_table(&self, task: usize) -> &ValueTable {
        &self.tasks[task].values
    }

    pub fn model(&self, task: usize) -> &TaskModel {
        &self.tasks[task].model
    }

    /// Rewards, static bounds and adaptive bounds from the current state.
    pub fn stats(&self) -> AgentStats {
        let k = self.tasks.len();
        let mut stats = AgentStats {
            values: Vec::with_capacity(k + 1),
            static_bounds: Vec::with_capacity(k + 1),
            adaptive_bounds: Vec::with_capacity(k + 1),
            sources: Vec::with_capacity(k),
            tallies: Vec::with_capacity(k),
        };
        for task in &self.tasks {
            let p = task.model.product.initial(self.s0);
            let tally = task.counter.tally(p);
            let static_bound = task.model.static_bounds[p as usize];
            let (adaptive, source) =
                adaptive_bound(tally, static_bound, self.config.data_threshold, self.config.z);
            stats.values.push(task.values.get(p));
            stats.static_bounds.push(static_bound);
            stats.adaptive_bounds.push(adaptive);
            stats.sources.push(source);
            stats.tallies.push(tally);
        }
        stats.values.push(self.q.max_value(self.s0));
        stats.static_bounds.push(0.0);
        stats.adaptive_bounds.push(0.0);
        stats
    }

    fn sample_task(&mut self, assignment: &[f64]) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (k, &p) in assignment.iter().enumerate() {
            acc += p.max(0.0);
            if u < acc {
                return k;
            }
        }
        assignment
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(assignment.len() - 1)
    }

    /// Runs one episode of exactly `horizon` steps under `assignment`, a
    /// distribution over the TWTL tasks followed by the null task.
    pub fn execute(&mut self, assignment: &[f64]) -> Result<EpisodeRecord, AgentError> {
        let k_null = self.tasks.len();
        if assignment.len() != k_null + 1 {
            return Err(AgentError::AssignmentShape {
                got: assignment.len(),
                expected: k_null + 1,
            });
        }
        let total: f64 = assignment.iter().sum();
        if (total - 1.0).abs() > 1e-6 || assignment.iter().any(|&p| p < -1e-9) {
            return Err(AgentError::AssignmentNotStochastic(total));
        }
        let task = self.sample_task(assignment);
        let explore = self.config.exploration.at(self.episode);
        let (alpha, gamma) = (self.config.alpha, self.config.gamma);
        let start = self.s0;
        let mut s = start;
        let mut reward = 0.0;
        let mut word: Vec<Symbol> = vec![self.world.label(s)];

        let mut product_state: Option<(ProductState, ProductState)> = None;
        let mut accepted_at = None;
        if task < k_null {
            let model = &self.tasks[task].model;
            let p0 = model.product.initial(s);
            if model.product.is_accepting(p0) {
                accepted_at = Some(0);
            }
            product_state = Some((p0, p0));
        }

        for t in 1..=self.config.horizon {
            match product_state {
                Some((p0, p)) if accepted_at.is_none() => {
                    let state = &mut self.tasks[task];
                    let a = state.model.policy.action(p);
                    let (s_next, r) = self.world.sample_transition(s, a, &mut self.rng)?;
                    let p_next = state.model.product.successor(p, s_next).ok_or(
                        AgentError::OutsideModel {
                            robot: self.id,
                            state: s_next,
                        },
                    )?;
                    state.values.update(p, r, p_next, alpha, gamma);
                    if state.model.product.is_accepting(p_next) {
                        accepted_at = Some(t);
                    }
                    product_state = Some((p0, p_next));
                    s = s_next;
                    reward += r;
                }
                _ => {
                    let a = self.q.epsilon_greedy(s, explore, &mut self.rng);
                    let (s_next, r) = self.world.sample_transition(s, a, &mut self.rng)?;
                    self.q.update(s, a, r, s_next, alpha, gamma);
                    s = s_next;
                    reward += r;
                }
            }
            word.push(self.world.label(s));
        }

        let satisfied = product_state.map(|(p0, _)| {
            let satisfied = accepted_at.is_some();
            self.tasks[task].counter.record(p0, satisfied);
            satisfied
        });
        if let Some(sat) = satisfied {
            let dfa = &self.tasks[task].model.dfa;
            let runs = dfa.run(&word);
            let prefix_accepted = runs.iter().skip(1).any(|&q| dfa.is_accepting(q));
            if prefix_accepted != sat {
                return Err(AgentError::Inconsistent {
                    robot: self.id,
                    task,
                });
            }
        }
        self.s0 = s;
        self.episode += 1;
        Ok(EpisodeRecord {
            task,
            satisfied,
            accepted_at,
            reward,
            steps: self.config.horizon,
            start,
            end: s,
        })
    }
}
