//! Direct recursive semantics over finite words.
//!
//! `sat(f, t1, t2)` decides whether the subword `w[t1..=t2]` satisfies `f`
//! (an empty subword when `t2 < t1`):
//!
//! - `H^d s`: `t2 - t1 >= d` and `s` holds at every step of `t1..=t1+d`.
//! - `f1 . f2`: with `t` the first index in `t1..t2` such that `w[t1..=t]`
//!   satisfies `f1`, the remainder `w[t+1..=t2]` satisfies `f2`.
//! - `[f]^[a,b]`: with `e = min(t1+b, t2)`, some `t` in `t1+a..=e` has
//!   `w[t..=e]` satisfying `f`. Completion anywhere up to `t1+b` counts, so a
//!   word need not extend to the end of the window.
//! - boolean operators act pointwise on the same subword.
//!
//! A word satisfies `f` when `sat(f, 0, len-1)` holds.

use std::collections::HashMap;

use super::{Formula, Symbol};

/// Longest horizon a formula can depend on: satisfaction of any word is
/// decided by its prefix `w[0..=time_bound(f)]`.
pub fn time_bound(f: &Formula) -> u32 {
    match f {
        Formula::Hold { duration, .. } => *duration,
        Formula::Not(inner) => time_bound(inner),
        Formula::And(a, b) | Formula::Or(a, b) => time_bound(a).max(time_bound(b)),
        Formula::Concat(a, b) => time_bound(a) + time_bound(b) + 1,
        Formula::Within { end, .. } => *end,
    }
}

/// Decides `w |= f` by structural recursion.
pub fn check_satisfaction(f: &Formula, w: &[Symbol]) -> bool {
    let mut eval = Evaluator {
        word: w,
        memo: HashMap::new(),
    };
    eval.sat(f, 0, w.len() as i64 - 1)
}

struct Evaluator<'w> {
    word: &'w [Symbol],
    memo: HashMap<(*const Formula, i64, i64), bool>,
}

impl Evaluator<'_> {
    fn sat(&mut self, f: &Formula, t1: i64, t2: i64) -> bool {
        let key = (f as *const Formula, t1, t2);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let v = match f {
            Formula::Hold {
                duration,
                atom,
                negated,
            } => {
                let d = *duration as i64;
                t2 - t1 >= d
                    && (t1..=t1 + d).all(|t| atom.holds_in(self.word[t as usize]) != *negated)
            }
            Formula::Not(inner) => !self.sat(inner, t1, t2),
            Formula::And(a, b) => self.sat(a, t1, t2) && self.sat(b, t1, t2),
            Formula::Or(a, b) => self.sat(a, t1, t2) || self.sat(b, t1, t2),
            Formula::Concat(a, b) => match (t1..t2).find(|&t| self.sat(a, t1, t)) {
                Some(t) => self.sat(b, t + 1, t2),
                None => false,
            },
            Formula::Within { inner, start, end } => {
                let e = (t1 + *end as i64).min(t2);
                (t1 + *start as i64..=e).any(|t| self.sat(inner, t, e))
            }
        };
        self.memo.insert(key, v);
        v
    }
}
