//! Tabular Q-learning and TD(0) value estimation.

use rand::Rng;

use crate::mdp::{ActionId, LabeledMdp, StateId};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.95;

/// Action values over the enabled state-action pairs of an MDP, initially 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
    enabled: Vec<bool>,
}

impl QTable {
    pub fn new(m: &LabeledMdp) -> Self {
        let na = m.num_actions();
        let mut enabled = Vec::with_capacity(m.num_states() * na);
        for s in 0..m.num_states() as StateId {
            enabled.extend((0..na).map(|a| m.is_enabled(s, a)));
        }
        QTable {
            num_actions: na,
            values: vec![0.0; enabled.len()],
            enabled,
        }
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s as usize * self.num_actions + a]
    }

    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values[s as usize * self.num_actions + a] = v;
    }

    fn actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        let base = s as usize * self.num_actions;
        (0..self.num_actions).filter(move |&a| self.enabled[base + a])
    }

    /// `max_a Q(s, a)` over enabled actions.
    pub fn max_value(&self, s: StateId) -> f64 {
        self.actions(s)
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest action index.
    pub fn best_action(&self, s: StateId) -> ActionId {
        let mut best = None;
        for a in self.actions(s) {
            let v = self.get(s, a);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((a, v));
            }
        }
        best.expect("every state has an enabled action").0
    }

    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
    pub fn update(&mut self, s: StateId, a: ActionId, r: f64, s_next: StateId, alpha: f64, gamma: f64) {
        let old = self.get(s, a);
        let target = r + gamma * self.max_value(s_next);
        self.set(s, a, old + alpha * (target - old));
    }

    /// Uniformly random enabled action with probability `explore`, the greedy
    /// action otherwise.
    pub fn epsilon_greedy<R: Rng + ?Sized>(&self, s: StateId, explore: f64, rng: &mut R) -> ActionId {
        if explore > 0.0 && rng.gen::<f64>() < explore {
            let n = self.actions(s).count();
            self.actions(s).nth(rng.gen_range(0..n)).unwrap()
        } else {
            self.best_action(s)
        }
    }
}

/// State values over product states, initially 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(num_states: usize) -> Self {
        ValueTable {
            values: vec![0.0; num_states],
        }
    }

    pub fn get(&self, p: u32) -> f64 {
        self.values[p as usize]
    }

    pub fn set(&mut self, p: u32, v: f64) {
        self.values[p as usize] = v;
    }

    /// `V(p) += alpha * (r + gamma * V(p') - V(p))`.
    pub fn update(&mut self, p: u32, r: f64, p_next: u32, alpha: f64, gamma: f64) {
        let old = self.get(p);
        let target = r + gamma * self.get(p_next);
        self.set(p, old + alpha * (target - old));
    }
}

/// Exploration probability decaying geometrically from `initial` at the
/// first episode to `last` at episode `episodes - 1`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationSchedule {
    pub initial: f64,
    pub last: f64,
    pub episodes: u64,
}

impl ExplorationSchedule {
    pub fn new(initial: f64, last: f64, episodes: u64) -> Self {
        ExplorationSchedule {
            initial,
            last,
            episodes,
        }
    }

    pub fn at(&self, episode: u64) -> f64 {
        if self.initial <= self.last {
            return self.initial;
        }
        let span = self.episodes.saturating_sub(1).max(1) as f64;
        let frac = (episode as f64 / span).min(1.0);
        let v = if self.last > 0.0 {
            self.initial * (self.last / self.initial).powf(frac)
        } else {
            self.initial * (1.0 - frac)
        };
        v.max(self.last)
    }
}
