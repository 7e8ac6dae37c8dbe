//! Compilation of TWTL formulas into deterministic finite automata.
//!
//! Each operator is compiled compositionally from the automata of its
//! operands, all sharing one projected alphabet (the propositions that occur
//! in the top-level formula):
//!
//! - hold: a counter of consecutive matching steps;
//! - concatenation: run the left automaton until its first acceptance, then
//!   hand the following symbols to the right automaton;
//! - window: a clock bounded by the window end paired with the set of states
//!   of every run of the operand started inside the window;
//! - and / or: synchronous product; not: complemented acceptance.
//!
//! After every step, states with no accepting continuation are merged into a
//! single trap and states whose every continuation accepts are merged into a
//! single accepting sink.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use serde::Serialize;

use crate::twtl::{Alphabet, Atom, Formula, Symbol};

pub type StateId = u32;

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Projected alphabets are enumerated explicitly; more propositions than this
/// in a single formula is rejected.
pub const MAX_FORMULA_PROPOSITIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DfaError {
    #[error("automaton exceeds the state cap of {cap} while compiling a subformula of depth {}", .subformula.depth())]
    StateCapExceeded { cap: usize, subformula: Formula },
    #[error("formula mentions {0} propositions, at most {MAX_FORMULA_PROPOSITIONS} are supported")]
    TooManyPropositions(usize),
    #[error("state {state} is out of range for an automaton with {num_states} states")]
    InvalidState { state: StateId, num_states: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub state_cap: usize,
    /// Run partition-refinement minimisation on the final automaton.
    pub minimize: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            state_cap: DEFAULT_STATE_CAP,
            minimize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    /// Global proposition indices; bit `j` of a local symbol is `props[j]`.
    props: Vec<usize>,
    initial: StateId,
    /// Row-major `[state][local symbol]`.
    transitions: Vec<StateId>,
    accepting: Vec<bool>,
    trap: Option<StateId>,
}

pub fn compile_dfa(f: &Formula) -> Result<Dfa, DfaError> {
    compile_dfa_with(f, &CompileOptions::default())
}

pub fn compile_dfa_with(f: &Formula, options: &CompileOptions) -> Result<Dfa, DfaError> {
    let props = f.propositions();
    if props.len() > MAX_FORMULA_PROPOSITIONS {
        return Err(DfaError::TooManyPropositions(props.len()));
    }
    let ctx = Ctx {
        props: &props,
        sigma: 1 << props.len(),
        cap: options.state_cap,
    };
    let mut table = ctx.compile(f)?;
    if options.minimize {
        table = table.minimized();
    }
    let trap = table.find_trap();
    Ok(Dfa {
        props,
        initial: table.initial,
        transitions: table.trans,
        accepting: table.accepting,
        trap,
    })
}

impl Dfa {
    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn props(&self) -> &[usize] {
        &self.props
    }

    /// Number of local symbols, `2^|props|`.
    pub fn alphabet_size(&self) -> usize {
        1 << self.props.len()
    }

    /// Rejecting sink, if the automaton has one.
    pub fn trap(&self) -> Option<StateId> {
        self.trap
    }

    pub fn is_accepting(&self, q: StateId) -> bool {
        self.accepting[q as usize]
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states() as StateId).filter(|&q| self.is_accepting(q))
    }

    /// Restricts a symbol over the global alphabet to this automaton's propositions.
    pub fn project(&self, sym: Symbol) -> usize {
        self.props
            .iter()
            .enumerate()
            .filter(|(_, &p)| sym.contains(p))
            .fold(0, |acc, (j, _)| acc | 1 << j)
    }

    pub fn step(&self, q: StateId, sym: Symbol) -> Result<StateId, DfaError> {
        if q as usize >= self.num_states() {
            return Err(DfaError::InvalidState {
                state: q,
                num_states: self.num_states(),
            });
        }
        Ok(self.step_local(q, self.project(sym)))
    }

    /// Transition on an already projected symbol. Panics on an invalid state.
    pub fn step_local(&self, q: StateId, local: usize) -> StateId {
        self.transitions[q as usize * self.alphabet_size() + local]
    }

    /// States visited while reading `word`, starting with the initial state.
    pub fn run(&self, word: &[Symbol]) -> Vec<StateId> {
        let mut q = self.initial;
        let mut out = Vec::with_capacity(word.len() + 1);
        out.push(q);
        for &sym in word {
            q = self.step_local(q, self.project(sym));
            out.push(q);
        }
        out
    }

    pub fn accepts(&self, word: &[Symbol]) -> bool {
        let q = word
            .iter()
            .fold(self.initial, |q, &sym| self.step_local(q, self.project(sym)));
        self.is_accepting(q)
    }

    /// Language-equivalent automaton with the fewest states.
    pub fn minimize(&self) -> Dfa {
        let table = Table {
            initial: self.initial,
            trans: self.transitions.clone(),
            accepting: self.accepting.clone(),
            sigma: self.alphabet_size(),
        }
        .minimized();
        let trap = table.find_trap();
        Dfa {
            props: self.props.clone(),
            initial: table.initial,
            transitions: table.trans,
            accepting: table.accepting,
            trap,
        }
    }

    /// Inspection format: the projected alphabet, then one successor row per state.
    pub fn to_json(&self, alphabet: &Alphabet) -> DfaJson {
        let propositions: Vec<String> = self
            .props
            .iter()
            .map(|&p| alphabet.name(p).to_string())
            .collect();
        let symbols = (0..self.alphabet_size())
            .map(|local| {
                (0..self.props.len())
                    .filter(|j| local >> j & 1 == 1)
                    .map(|j| propositions[j].clone())
                    .collect()
            })
            .collect();
        DfaJson {
            propositions,
            symbols,
            states: self.num_states(),
            initial: self.initial,
            accepting: self.accepting_states().collect(),
            trap: self.trap,
            transitions: self
                .transitions
                .chunks(self.alphabet_size())
                .map(<[StateId]>::to_vec)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DfaJson {
    pub propositions: Vec<String>,
    /// `symbols[j]` lists the propositions true in local symbol `j`.
    pub symbols: Vec<Vec<String>>,
    pub states: usize,
    pub initial: StateId,
    pub accepting: Vec<StateId>,
    pub trap: Option<StateId>,
    /// `transitions[q][j]` is the successor of `q` on local symbol `j`.
    pub transitions: Vec<Vec<StateId>>,
}

/// Explicit transition table used during construction.
#[derive(Debug, Clone)]
struct Table {
    initial: StateId,
    trans: Vec<StateId>,
    accepting: Vec<bool>,
    sigma: usize,
}

/// Per-state classification used for pruning.
struct Analysis {
    /// No accepting state is reachable.
    dead: Vec<bool>,
    /// Every reachable state (including itself) is accepting.
    universal: Vec<bool>,
}

impl Table {
    fn len(&self) -> usize {
        self.accepting.len()
    }

    fn next(&self, q: StateId, sym: usize) -> StateId {
        self.trans[q as usize * self.sigma + sym]
    }

    fn predecessors(&self) -> Vec<Vec<StateId>> {
        let mut preds = vec![Vec::new(); self.len()];
        for q in 0..self.len() {
            for sym in 0..self.sigma {
                let to = self.next(q as StateId, sym) as usize;
                if preds[to].last() != Some(&(q as StateId)) {
                    preds[to].push(q as StateId);
                }
            }
        }
        preds
    }

    fn backward_closure(preds: &[Vec<StateId>], seeds: impl Iterator<Item = usize>) -> Vec<bool> {
        let mut mark = vec![false; preds.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in seeds {
            if !mark[s] {
                mark[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(q) = queue.pop_front() {
            for &p in &preds[q] {
                if !mark[p as usize] {
                    mark[p as usize] = true;
                    queue.push_back(p as usize);
                }
            }
        }
        mark
    }

    fn analyse(&self) -> Analysis {
        let preds = self.predecessors();
        let live = Self::backward_closure(&preds, (0..self.len()).filter(|&q| self.accepting[q]));
        let can_reject =
            Self::backward_closure(&preds, (0..self.len()).filter(|&q| !self.accepting[q]));
        Analysis {
            dead: live.iter().map(|l| !l).collect(),
            universal: can_reject.iter().map(|r| !r).collect(),
        }
    }

    /// Merges dead states into one trap and universal states into one sink,
    /// keeping only states reachable from the initial state.
    fn normalized(self, cap: usize) -> Option<Table> {
        let info = self.analyse();
        #[derive(Clone, Copy, PartialEq, Eq, Hash)]
        enum Class {
            Dead,
            Universal,
            Live(StateId),
        }
        let class = |q: StateId| {
            if info.dead[q as usize] {
                Class::Dead
            } else if info.universal[q as usize] {
                Class::Universal
            } else {
                Class::Live(q)
            }
        };
        explore(
            self.sigma,
            class(self.initial),
            |c, sym| match *c {
                Class::Live(q) => class(self.next(q, sym)),
                other => other,
            },
            |c| match *c {
                Class::Dead => false,
                Class::Universal => true,
                Class::Live(q) => self.accepting[q as usize],
            },
            cap,
        )
    }

    fn find_trap(&self) -> Option<StateId> {
        (0..self.len() as StateId).find(|&q| {
            !self.accepting[q as usize] && (0..self.sigma).all(|sym| self.next(q, sym) == q)
        })
    }

    /// Moore partition refinement.
    fn minimized(&self) -> Table {
        let n = self.len();
        let mut class: Vec<usize> = self.accepting.iter().map(|&a| a as usize).collect();
        let mut count = 0;
        loop {
            let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
            let mut next = vec![0; n];
            for q in 0..n {
                let mut signature = Vec::with_capacity(self.sigma + 1);
                signature.push(class[q]);
                signature.extend((0..self.sigma).map(|s| class[self.next(q as StateId, s) as usize]));
                let fresh = ids.len();
                next[q] = *ids.entry(signature).or_insert(fresh);
            }
            let new_count = ids.len();
            class = next;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        let mut trans = vec![0; count * self.sigma];
        let mut accepting = vec![false; count];
        for q in 0..n {
            let c = class[q];
            accepting[c] = self.accepting[q];
            for s in 0..self.sigma {
                trans[c * self.sigma + s] = class[self.next(q as StateId, s) as usize] as StateId;
            }
        }
        Table {
            initial: class[self.initial as usize] as StateId,
            trans,
            accepting,
            sigma: self.sigma,
        }
    }
}

/// Breadth-first enumeration of the states reachable from `init`.
/// Returns `None` when more than `cap` states are discovered.
fn explore<K, F, A>(sigma: usize, init: K, mut step: F, accept: A, cap: usize) -> Option<Table>
where
    K: Clone + Eq + Hash,
    F: FnMut(&K, usize) -> K,
    A: Fn(&K) -> bool,
{
    let mut ids: HashMap<K, StateId> = HashMap::new();
    let mut keys: Vec<K> = Vec::new();
    let mut trans: Vec<StateId> = Vec::new();
    ids.insert(init.clone(), 0);
    keys.push(init);
    let mut cursor = 0;
    while cursor < keys.len() {
        let key = keys[cursor].clone();
        for sym in 0..sigma {
            let succ = step(&key, sym);
            let id = match ids.entry(succ) {
                Entry::Occupied(e) => *e.get(),
                Entry::Vacant(e) => {
                    if keys.len() >= cap {
                        return None;
                    }
                    let id = keys.len() as StateId;
                    keys.push(e.key().clone());
                    e.insert(id);
                    id
                }
            };
            trans.push(id);
        }
        cursor += 1;
    }
    let accepting = keys.iter().map(accept).collect();
    Some(Table {
        initial: 0,
        trans,
        accepting,
        sigma,
    })
}

struct Ctx<'a> {
    props: &'a [usize],
    sigma: usize,
    cap: usize,
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum WindowKey {
    /// `read` symbols consumed so far; current states of all live runs.
    Running { read: u32, runs: Vec<StateId> },
    Done(bool),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum SeqKey {
    Left(StateId),
    /// The left operand just completed; the right one has read nothing yet.
    Handoff,
    Right(StateId),
}

impl Ctx<'_> {
    fn local_bit(&self, prop: usize) -> usize {
        // Every proposition of a subformula occurs in the top-level formula.
        self.props.iter().position(|&p| p == prop).unwrap()
    }

    fn finish(&self, f: &Formula, table: Option<Table>) -> Result<Table, DfaError> {
        table
            .and_then(|t| t.normalized(self.cap))
            .ok_or_else(|| DfaError::StateCapExceeded {
                cap: self.cap,
                subformula: f.clone(),
            })
    }

    fn compile(&self, f: &Formula) -> Result<Table, DfaError> {
        let table = match f {
            Formula::Hold {
                duration,
                atom,
                negated,
            } => {
                let bit = match atom {
                    Atom::True => None,
                    Atom::Prop(p) => Some(self.local_bit(*p)),
                };
                let matches = |sym: usize| bit.is_none_or(|b| sym >> b & 1 == 1) != *negated;
                let done = duration + 1;
                // Counter of matching steps so far; `None` once a step failed.
                explore(
                    self.sigma,
                    Some(0u32),
                    |c, sym| match *c {
                        Some(c) if c == done => Some(c),
                        Some(c) if matches(sym) => Some(c + 1),
                        _ => None,
                    },
                    |c| *c == Some(done),
                    self.cap,
                )
            }
            Formula::Not(inner) => {
                let mut t = self.compile(inner)?;
                t.accepting.iter_mut().for_each(|a| *a = !*a);
                Some(t)
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                let conj = matches!(f, Formula::And(..));
                let (ta, tb) = (self.compile(a)?, self.compile(b)?);
                explore(
                    self.sigma,
                    (ta.initial, tb.initial),
                    |&(qa, qb), sym| (ta.next(qa, sym), tb.next(qb, sym)),
                    |&(qa, qb)| {
                        let (x, y) = (ta.accepting[qa as usize], tb.accepting[qb as usize]);
                        if conj {
                            x && y
                        } else {
                            x || y
                        }
                    },
                    self.cap,
                )
            }
            Formula::Concat(a, b) => {
                let (ta, tb) = (self.compile(a)?, self.compile(b)?);
                explore(
                    self.sigma,
                    SeqKey::Left(ta.initial),
                    |k, sym| match *k {
                        SeqKey::Left(q) => {
                            let q = ta.next(q, sym);
                            if ta.accepting[q as usize] {
                                SeqKey::Handoff
                            } else {
                                SeqKey::Left(q)
                            }
                        }
                        SeqKey::Handoff => SeqKey::Right(tb.next(tb.initial, sym)),
                        SeqKey::Right(q) => SeqKey::Right(tb.next(q, sym)),
                    },
                    |k| matches!(k, SeqKey::Right(q) if tb.accepting[*q as usize]),
                    self.cap,
                )
            }
            Formula::Within { inner, start, end } => {
                let t = self.compile(inner)?;
                let info = t.analyse();
                explore(
                    self.sigma,
                    WindowKey::Running {
                        read: 0,
                        runs: Vec::new(),
                    },
                    |k, sym| match k {
                        WindowKey::Done(v) => WindowKey::Done(*v),
                        WindowKey::Running { read, runs } => {
                            let index = *read;
                            let mut next: Vec<StateId> =
                                runs.iter().map(|&q| t.next(q, sym)).collect();
                            if index >= *start {
                                next.push(t.next(t.initial, sym));
                            }
                            next.retain(|&q| !info.dead[q as usize]);
                            next.sort_unstable();
                            next.dedup();
                            if next.iter().any(|&q| info.universal[q as usize]) {
                                WindowKey::Done(true)
                            } else if index == *end {
                                WindowKey::Done(next.iter().any(|&q| t.accepting[q as usize]))
                            } else {
                                WindowKey::Running {
                                    read: index + 1,
                                    runs: next,
                                }
                            }
                        }
                    },
                    |k| match k {
                        WindowKey::Done(v) => *v,
                        WindowKey::Running { runs, .. } => {
                            runs.iter().any(|&q| t.accepting[q as usize])
                        }
                    },
                    self.cap,
                )
            }
        };
        self.finish(f, table)
    }
}
