//! Labeled Markov decision processes.

mod grid;

pub use grid::{
    build_gridworld, build_robot_model, CellType, Direction, GridScenario, GridWorld, RobotKind,
    RobotSpec, UncertaintySpec, COMPASS_ACTIONS, GRID_PROPOSITIONS,
};

use rand::Rng;

use crate::twtl::{Alphabet, Symbol};

pub type StateId = u32;
pub type ActionId = usize;

/// Tolerance on row sums of transition distributions.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MdpError {
    #[error("distribution of state {state}, action {action} sums to {sum}")]
    NotStochastic {
        state: StateId,
        action: ActionId,
        sum: f64,
    },
    #[error("negative probability in state {state}, action {action}")]
    NegativeProbability { state: StateId, action: ActionId },
    #[error("state {0} has no enabled action")]
    NoEnabledAction(StateId),
    #[error("state {0} does not exist")]
    UnknownState(StateId),
    #[error("action {action} is not enabled in state {state}")]
    DisabledAction { state: StateId, action: ActionId },
    #[error("inconsistent scenario: {0}")]
    Scenario(String),
}

/// Finite MDP whose states carry proposition labels. Immutable once built.
#[derive(Debug, Clone)]
pub struct LabeledMdp {
    alphabet: Alphabet,
    action_names: Vec<String>,
    labels: Vec<Symbol>,
    /// `[state * num_actions + action]`; `None` when the action is disabled.
    rows: Vec<Option<Vec<(StateId, f64)>>>,
    rewards: Vec<f64>,
}

impl LabeledMdp {
    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn label(&self, s: StateId) -> Symbol {
        self.labels[s as usize]
    }

    pub fn reward(&self, s: StateId, a: ActionId) -> f64 {
        self.rewards[s as usize * self.num_actions() + a]
    }

    /// Successor distribution, or `None` for a disabled action.
    pub fn transition(&self, s: StateId, a: ActionId) -> Option<&[(StateId, f64)]> {
        self.rows[s as usize * self.num_actions() + a].as_deref()
    }

    pub fn is_enabled(&self, s: StateId, a: ActionId) -> bool {
        self.transition(s, a).is_some()
    }

    /// Enabled actions of `s` in canonical order.
    pub fn enabled_actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.num_actions()).filter(move |&a| self.is_enabled(s, a))
    }

    /// States reachable with positive probability.
    pub fn support(&self, s: StateId, a: ActionId) -> impl Iterator<Item = StateId> + '_ {
        self.transition(s, a)
            .unwrap_or(&[])
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(t, _)| *t)
    }

    /// Successors reached with probability at least `1 - eps`.
    pub fn likely_successors(
        &self,
        s: StateId,
        a: ActionId,
        eps: f64,
    ) -> impl Iterator<Item = StateId> + '_ {
        let threshold = 1.0 - eps - 1e-12;
        self.transition(s, a)
            .unwrap_or(&[])
            .iter()
            .filter(move |(_, p)| *p >= threshold)
            .map(|(t, _)| *t)
    }

    /// Draws the next state; the reward is `R(s, a)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: StateId,
        a: ActionId,
        rng: &mut R,
    ) -> Result<(StateId, f64), MdpError> {
        if s as usize >= self.num_states() {
            return Err(MdpError::UnknownState(s));
        }
        let row = self
            .transition(s, a)
            .ok_or(MdpError::DisabledAction { state: s, action: a })?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = row[row.len() - 1].0;
        for &(t, p) in row {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        Ok((next, self.reward(s, a)))
    }
}

/// Incremental construction of a [`LabeledMdp`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    mdp: LabeledMdp,
}

impl MdpBuilder {
    pub fn new<S: Into<String>>(alphabet: Alphabet, actions: impl IntoIterator<Item = S>) -> Self {
        MdpBuilder {
            mdp: LabeledMdp {
                alphabet,
                action_names: actions.into_iter().map(Into::into).collect(),
                labels: Vec::new(),
                rows: Vec::new(),
                rewards: Vec::new(),
            },
        }
    }

    pub fn add_state(&mut self, label: Symbol) -> StateId {
        let n = self.mdp.num_actions();
        self.mdp.labels.push(label);
        self.mdp.rows.extend(std::iter::repeat_n(None, n));
        self.mdp.rewards.extend(std::iter::repeat_n(0.0, n));
        (self.mdp.labels.len() - 1) as StateId
    }

    /// Enables `a` in `s` with the given distribution; repeated targets are merged.
    pub fn set_transition(&mut self, s: StateId, a: ActionId, dist: &[(StateId, f64)]) -> &mut Self {
        let mut row: Vec<(StateId, f64)> = Vec::with_capacity(dist.len());
        for &(t, p) in dist {
            match row.iter_mut().find(|(u, _)| *u == t) {
                Some(entry) => entry.1 += p,
                None => row.push((t, p)),
            }
        }
        let n = self.mdp.num_actions();
        self.mdp.rows[s as usize * n + a] = Some(row);
        self
    }

    pub fn set_reward(&mut self, s: StateId, a: ActionId, r: f64) -> &mut Self {
        let n = self.mdp.num_actions();
        self.mdp.rewards[s as usize * n + a] = r;
        self
    }

    pub fn build(self) -> Result<LabeledMdp, MdpError> {
        let mdp = self.mdp;
        for s in 0..mdp.num_states() as StateId {
            if mdp.enabled_actions(s).next().is_none() {
                return Err(MdpError::NoEnabledAction(s));
            }
            for a in mdp.enabled_actions(s) {
                let row = mdp.transition(s, a).unwrap();
                let mut sum = 0.0;
                for &(t, p) in row {
                    if t as usize >= mdp.num_states() {
                        return Err(MdpError::UnknownState(t));
                    }
                    if p < 0.0 {
                        return Err(MdpError::NegativeProbability { state: s, action: a });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(MdpError::NotStochastic {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(mdp)
    }
}
