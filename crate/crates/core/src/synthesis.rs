//! Product of a labeled MDP with a DFA, distance-to-acceptance over
//! high-probability transitions, and the greedy distance policy.
//!
//! The automaton reads the label of the state being entered: the initial
//! product state of `s` is `(s, δ(q0, l(s)))` and a move to `s'` takes `q` to
//! `δ(q, l(s'))`. The word emitted by a trajectory `s0 .. sT` is therefore
//! `l(s0) .. l(sT)`, and the product is accepting exactly when that word is.

use std::collections::VecDeque;

use crate::automata::{self, Dfa};
use crate::mdp::{ActionId, LabeledMdp, StateId};

pub type ProductState = u32;

const ABSENT: u32 = u32::MAX;

/// Probabilities within this distance of `1 - eps` still count as high.
const EPS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error("automaton refers to proposition {0}, which the MDP alphabet does not have")]
    UnknownProposition(usize),
    #[error("the MDP has no states, so the product has no initial state")]
    NoInitialState,
}

/// Reachable part of `M x A`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    num_actions: usize,
    num_mdp_states: usize,
    pairs: Vec<(StateId, automata::StateId)>,
    /// `[s * |Q| + q]` to product state, `ABSENT` when unreachable.
    index: Vec<u32>,
    /// `[q * |S| + s']`: automaton state after entering `s'` from `q`.
    dfa_next: Vec<automata::StateId>,
    dfa_accepting: Vec<bool>,
    initials: Vec<ProductState>,
    rows: Vec<Option<Box<[(ProductState, f64)]>>>,
    /// MDP rewards, `[s * |A| + a]`.
    rewards: Vec<f64>,
    stay: Option<ActionId>,
}

impl ProductMdp {
    pub fn num_states(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_mdp_states(&self) -> usize {
        self.num_mdp_states
    }

    /// `(mdp state, automaton state)` of a product state.
    pub fn pair(&self, p: ProductState) -> (StateId, automata::StateId) {
        self.pairs[p as usize]
    }

    pub fn mdp_state(&self, p: ProductState) -> StateId {
        self.pairs[p as usize].0
    }

    pub fn locate(&self, s: StateId, q: automata::StateId) -> Option<ProductState> {
        let nq = self.dfa_accepting.len();
        match self.index.get(s as usize * nq + q as usize) {
            Some(&p) if p != ABSENT => Some(p),
            _ => None,
        }
    }

    pub fn is_accepting(&self, p: ProductState) -> bool {
        self.dfa_accepting[self.pairs[p as usize].1 as usize]
    }

    /// The initial product state whose MDP component is `s`.
    pub fn initial(&self, s: StateId) -> ProductState {
        self.initials[s as usize]
    }

    pub fn initials(&self) -> &[ProductState] {
        &self.initials
    }

    pub fn transition(&self, p: ProductState, a: ActionId) -> Option<&[(ProductState, f64)]> {
        self.rows[p as usize * self.num_actions + a].as_deref()
    }

    pub fn enabled_actions(&self, p: ProductState) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.num_actions).filter(move |&a| self.transition(p, a).is_some())
    }

    /// Lifted reward `R((s, q), a) = R(s, a)`.
    pub fn reward(&self, p: ProductState, a: ActionId) -> f64 {
        self.rewards[self.mdp_state(p) as usize * self.num_actions + a]
    }

    /// Product state reached when the MDP moves from `p` into `s_next`.
    /// `None` if that pair lies outside the reachable product, which only
    /// happens when `s_next` is not in the model's support.
    pub fn successor(&self, p: ProductState, s_next: StateId) -> Option<ProductState> {
        let q = self.pairs[p as usize].1;
        let q_next = self.dfa_next[q as usize * self.num_mdp_states + s_next as usize];
        self.locate(s_next, q_next)
    }

    /// Successors reached with probability at least `1 - eps`.
    pub fn likely_successors(
        &self,
        p: ProductState,
        a: ActionId,
        eps: f64,
    ) -> impl Iterator<Item = ProductState> + '_ {
        let threshold = 1.0 - eps - EPS_SLACK;
        self.transition(p, a)
            .unwrap_or(&[])
            .iter()
            .filter(move |(_, prob)| *prob >= threshold)
            .map(|(t, _)| *t)
    }

    pub fn stay_action(&self) -> Option<ActionId> {
        self.stay
    }
}

/// Builds the product reachable from the initial states `(s, δ(q0, l(s)))`.
pub fn build_product(m: &LabeledMdp, d: &Dfa) -> Result<ProductMdp, SynthesisError> {
    if let Some(&p) = d.props().iter().find(|&&p| p >= m.alphabet().len()) {
        return Err(SynthesisError::UnknownProposition(p));
    }
    let ns = m.num_states();
    let nq = d.num_states();
    let na = m.num_actions();
    if ns == 0 {
        return Err(SynthesisError::NoInitialState);
    }
    let local: Vec<usize> = (0..ns as StateId).map(|s| d.project(m.label(s))).collect();
    let mut dfa_next = Vec::with_capacity(nq * ns);
    for q in 0..nq as automata::StateId {
        dfa_next.extend(local.iter().map(|&l| d.step_local(q, l)));
    }
    let next_q = |q: automata::StateId, s: StateId| dfa_next[q as usize * ns + s as usize];

    let mut interner = Interner {
        nq,
        index: vec![ABSENT; ns * nq],
        pairs: Vec::new(),
        queue: VecDeque::new(),
    };
    let initials: Vec<ProductState> = (0..ns as StateId)
        .map(|s| interner.intern(s, next_q(d.initial(), s)))
        .collect();

    let mut rows: Vec<Option<Box<[(ProductState, f64)]>>> = Vec::new();
    while let Some(p) = interner.queue.pop_front() {
        // States are interned in BFS order, so `p` owns the next rows.
        debug_assert_eq!(rows.len(), p as usize * na);
        let (s, q) = interner.pairs[p as usize];
        for a in 0..na {
            let row = m.transition(s, a).map(|dist| {
                dist.iter()
                    .map(|&(t, prob)| (interner.intern(t, next_q(q, t)), prob))
                    .collect::<Box<[_]>>()
            });
            rows.push(row);
        }
    }
    let Interner { index, pairs, .. } = interner;

    let mut rewards = Vec::with_capacity(ns * na);
    for s in 0..ns as StateId {
        rewards.extend((0..na).map(|a| m.reward(s, a)));
    }
    Ok(ProductMdp {
        num_actions: na,
        num_mdp_states: ns,
        pairs,
        index,
        dfa_next,
        dfa_accepting: (0..nq as automata::StateId).map(|q| d.is_accepting(q)).collect(),
        initials,
        rows,
        rewards,
        stay: (0..na).find(|&a| m.action_name(a) == "Stay"),
    })
}

struct Interner {
    nq: usize,
    index: Vec<u32>,
    pairs: Vec<(StateId, automata::StateId)>,
    queue: VecDeque<ProductState>,
}

impl Interner {
    fn intern(&mut self, s: StateId, q: automata::StateId) -> ProductState {
        let slot = &mut self.index[s as usize * self.nq + q as usize];
        if *slot == ABSENT {
            *slot = self.pairs.len() as u32;
            self.pairs.push((s, q));
            self.queue.push_back(*slot);
        }
        *slot
    }
}

/// Minimum number of `eps`-stochastic transitions to an accepting state;
/// `None` when no such path exists.
pub fn compute_distance(p: &ProductMdp, eps_est: f64) -> Vec<Option<u32>> {
    let n = p.num_states();
    let mut reverse: Vec<Vec<ProductState>> = vec![Vec::new(); n];
    for u in 0..n as ProductState {
        for a in 0..p.num_actions() {
            for v in p.likely_successors(u, a, eps_est) {
                reverse[v as usize].push(u);
            }
        }
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for u in 0..n as ProductState {
        if p.is_accepting(u) {
            dist[u as usize] = Some(0);
            queue.push_back(u);
        }
    }
    while let Some(v) = queue.pop_front() {
        let dv = dist[v as usize].unwrap();
        for &u in &reverse[v as usize] {
            if dist[u as usize].is_none() {
                dist[u as usize] = Some(dv + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Stationary deterministic policy over a product MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<ActionId>,
    distances: Vec<Option<u32>>,
}

impl Policy {
    pub fn action(&self, p: ProductState) -> ActionId {
        self.actions[p as usize]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn distance(&self, p: ProductState) -> Option<u32> {
        self.distances[p as usize]
    }

    pub fn distances(&self) -> &[Option<u32>] {
        &self.distances
    }
}

/// Smallest distance among the `eps`-stochastic successors of `(p, a)`.
pub fn min_successor_distance(
    p: &ProductMdp,
    dist: &[Option<u32>],
    state: ProductState,
    a: ActionId,
    eps_est: f64,
) -> Option<u32> {
    p.likely_successors(state, a, eps_est)
        .filter_map(|t| dist[t as usize])
        .min()
}

/// The greedy distance policy: each state takes the action whose likely
/// successors get closest to acceptance, ties going to the lowest action
/// index. Accepting states take their first enabled action and states that
/// cannot reach acceptance stay put.
pub fn synthesize_policy(p: &ProductMdp, dist: &[Option<u32>], eps_est: f64) -> Policy {
    let actions = (0..p.num_states() as ProductState)
        .map(|u| {
            let first = p.enabled_actions(u).next().expect("every state has an action");
            let fallback = p
                .stay_action()
                .filter(|&a| p.transition(u, a).is_some())
                .unwrap_or(first);
            match dist[u as usize] {
                Some(0) => first,
                None => fallback,
                Some(_) => p
                    .enabled_actions(u)
                    .filter_map(|a| min_successor_distance(p, dist, u, a, eps_est).map(|d| (d, a)))
                    .min()
                    .map_or(fallback, |(_, a)| a),
            }
        })
        .collect();
    Policy {
        actions,
        distances: dist.to_vec(),
    }
}
