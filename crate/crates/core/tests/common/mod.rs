#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use twtl_fleet::automata::compile_dfa;
use twtl_fleet::mdp::{LabeledMdp, MdpBuilder};
use twtl_fleet::synthesis::{build_product, Policy, ProductMdp};
use twtl_fleet::twtl::{time_bound, Alphabet, Atom, Formula, Symbol};

pub fn alphabet(n: usize) -> Alphabet {
    Alphabet::new(["A", "B", "C"].into_iter().take(n))
}

fn atom(naps: usize) -> impl Strategy<Value = Atom> {
    prop_oneof![1 => Just(Atom::True), 4 => (0..naps).prop_map(Atom::Prop)]
}

/// Formulas of depth at most `depth` over `naps` propositions with windows
/// ending by 8.
pub fn formula(naps: usize, depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = (0u32..=3, atom(naps), any::<bool>()).prop_map(|(duration, atom, negated)| Formula::Hold {
        duration,
        atom,
        negated,
    });
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::concat(a, b)),
            (inner, 0u32..=8, 0u32..=8)
                .prop_map(|(f, a, b)| Formula::within(f, a.min(b), a.max(b))),
        ]
    })
}

/// Formulas without any negation.
pub fn positive_formula(naps: usize, depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = (0u32..=3, atom(naps)).prop_map(|(d, a)| Formula::hold(d, a));
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::concat(a, b)),
            (inner, 0u32..=8, 0u32..=8)
                .prop_map(|(f, a, b)| Formula::within(f, a.min(b), a.max(b))),
        ]
    })
}

pub fn word(naps: usize, max_len: usize) -> impl Strategy<Value = Vec<Symbol>> {
    prop::collection::vec((0u64..1 << naps).prop_map(Symbol), 0..=max_len)
}

/// Seeded counterpart of [`formula`]: each level picks a hold with
/// probability growing as depth runs out.
pub fn random_formula<R: Rng>(rng: &mut R, naps: usize, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        let atom = if rng.gen_bool(0.2) {
            Atom::True
        } else {
            Atom::Prop(rng.gen_range(0..naps))
        };
        return Formula::Hold {
            duration: rng.gen_range(0..=3),
            atom,
            negated: rng.gen_bool(0.25),
        };
    }
    let sub = |rng: &mut R| random_formula(rng, naps, depth - 1);
    match rng.gen_range(0..5) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => Formula::concat(sub(rng), sub(rng)),
        _ => {
            let a = rng.gen_range(0..=8);
            let b = rng.gen_range(a..=8);
            Formula::within(sub(rng), a, b)
        }
    }
}

/// Word of length up to `time_bound(f) + 3` with uniformly random symbols.
pub fn random_word<R: Rng>(rng: &mut R, f: &Formula, naps: usize) -> Vec<Symbol> {
    let len = rng.gen_range(0..=time_bound(f) as usize + 3);
    (0..len).map(|_| Symbol(rng.gen_range(0..1u64 << naps))).collect()
}

/// Satisfaction evaluated straight from the definitions on word slices, with
/// no memoisation.
pub fn naive_sat(f: &Formula, w: &[Symbol]) -> bool {
    match f {
        Formula::Hold {
            duration,
            atom,
            negated,
        } => {
            let d = *duration as usize;
            w.len() > d && w[..=d].iter().all(|&s| atom.holds_in(s) != *negated)
        }
        Formula::Not(g) => !naive_sat(g, w),
        Formula::And(a, b) => naive_sat(a, w) && naive_sat(b, w),
        Formula::Or(a, b) => naive_sat(a, w) || naive_sat(b, w),
        Formula::Concat(a, b) => {
            // Earliest nonempty prefix matching `a`, leaving a nonempty rest.
            (1..w.len())
                .find(|&k| naive_sat(a, &w[..k]))
                .is_some_and(|k| naive_sat(b, &w[k..]))
        }
        Formula::Within { inner, start, end } => {
            if w.is_empty() {
                return false;
            }
            let e = (*end as usize).min(w.len() - 1);
            (*start as usize..=e).any(|t| naive_sat(inner, &w[t..=e]))
        }
    }
}

/// Structure of a random labelled MDP in the slip family: every action has an
/// intended successor taking `1 - eps` and distinct slip successors sharing `eps`.
pub struct MdpShape {
    pub naps: usize,
    pub labels: Vec<u64>,
    /// `rows[s][a] = (intended, slips)`.
    pub rows: Vec<Vec<(u32, Vec<u32>)>>,
}

impl MdpShape {
    pub fn random<R: Rng>(rng: &mut R, states: usize, actions: usize, naps: usize) -> MdpShape {
        let labels = (0..states).map(|_| rng.gen_range(0..1u64 << naps)).collect();
        let rows = (0..states)
            .map(|_| {
                (0..actions)
                    .map(|_| {
                        let intended = rng.gen_range(0..states as u32);
                        let mut slips = Vec::new();
                        for _ in 0..rng.gen_range(1..=2) {
                            let t = rng.gen_range(0..states as u32);
                            if t != intended && !slips.contains(&t) {
                                slips.push(t);
                            }
                        }
                        (intended, slips)
                    })
                    .collect()
            })
            .collect();
        MdpShape { naps, labels, rows }
    }

    pub fn build(&self, eps: f64) -> LabeledMdp {
        let actions = self.rows[0].len();
        let mut b = MdpBuilder::new(alphabet(self.naps), (0..actions).map(|a| format!("a{a}")));
        for &l in &self.labels {
            b.add_state(Symbol(l));
        }
        for (s, row) in self.rows.iter().enumerate() {
            for (a, (intended, slips)) in row.iter().enumerate() {
                let mut dist = vec![(*intended, if slips.is_empty() { 1.0 } else { 1.0 - eps })];
                dist.extend(slips.iter().map(|&t| (t, eps / slips.len() as f64)));
                b.set_transition(s as u32, a, &dist);
            }
        }
        b.build().unwrap()
    }
}

/// Edges `u -> v` with some action moving there with probability at least
/// `1 - eps`, read straight from the transition rows.
fn likely_edges(p: &ProductMdp, eps: f64) -> Vec<Vec<usize>> {
    let n = p.num_states();
    (0..n)
        .map(|u| {
            let mut out = Vec::new();
            for a in 0..p.num_actions() {
                for &(v, prob) in p.transition(u as u32, a).unwrap_or(&[]) {
                    if prob >= 1.0 - eps - 1e-12 && !out.contains(&(v as usize)) {
                        out.push(v as usize);
                    }
                }
            }
            out
        })
        .collect()
}

/// All-pairs shortest paths over likely edges, then the distance to the
/// nearest accepting state.
pub fn floyd_distance(p: &ProductMdp, eps: f64) -> Vec<Option<u32>> {
    const INF: u32 = u32::MAX / 2;
    let n = p.num_states();
    let mut d = vec![INF; n * n];
    for u in 0..n {
        d[u * n + u] = 0;
    }
    for (u, out) in likely_edges(p, eps).into_iter().enumerate() {
        for v in out {
            if u != v {
                d[u * n + v] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == INF {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    (0..n)
        .map(|u| {
            (0..n)
                .filter(|&v| p.is_accepting(v as u32))
                .map(|v| d[u * n + v])
                .min()
                .filter(|&x| x < INF)
        })
        .collect()
}

/// Every non-accepting state at finite distance has a likely successor under
/// the policy's action that is strictly closer.
pub fn descent_holds(p: &ProductMdp, dist: &[Option<u32>], pol: &Policy, eps: f64) -> bool {
    (0..p.num_states()).all(|u| match dist[u] {
        Some(d) if d > 0 => p
            .transition(u as u32, pol.action(u as u32))
            .unwrap_or(&[])
            .iter()
            .filter(|(_, prob)| *prob >= 1.0 - eps - 1e-12)
            .any(|&(v, _)| dist[v as usize].is_some_and(|dv| dv < d)),
        _ => true,
    })
}

/// Fraction of `rollouts` runs from MDP state `s0` that reach acceptance
/// within `horizon` steps, moving on `truth` and tracking the automaton
/// through `p`.
pub fn monte_carlo<R: Rng>(
    p: &ProductMdp,
    pol: &Policy,
    truth: &LabeledMdp,
    s0: u32,
    horizon: u32,
    rollouts: usize,
    rng: &mut R,
) -> f64 {
    let mut hits = 0;
    for _ in 0..rollouts {
        let mut u = p.initial(s0);
        for _ in 0..horizon {
            if p.is_accepting(u) {
                break;
            }
            let s = p.mdp_state(u);
            let (s_next, _) = truth.sample_transition(s, pol.action(u), rng).unwrap();
            u = p.successor(u, s_next).unwrap();
        }
        hits += usize::from(p.is_accepting(u));
    }
    hits as f64 / rollouts as f64
}

/// A random product with at most `max_states` states over a random formula
/// that mentions at least one proposition; retries until one fits.
pub fn random_product<R: Rng>(rng: &mut R, max_states: usize, eps: f64) -> (MdpShape, Formula, ProductMdp) {
    loop {
        let states = rng.gen_range(3..=12);
        let actions = rng.gen_range(2..=3);
        let shape = MdpShape::random(rng, states, actions, 2);
        let f = random_formula(rng, 2, 2);
        if f.propositions().is_empty() {
            continue;
        }
        let dfa = compile_dfa(&f).unwrap();
        let p = build_product(&shape.build(eps), &dfa).unwrap();
        if p.num_states() <= max_states {
            return (shape, f, p);
        }
    }
}
