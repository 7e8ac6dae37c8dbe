//! Time Window Temporal Logic formulas over a finite set of atomic propositions.
//!
//! Concrete syntax accepted by [`parse_twtl`]:
//!
//! ```text
//! formula := seq
//! seq     := or ('.' or)*              concatenation, left associative, loosest
//! or      := and ('|' and)*
//! and     := unary ('&' unary)*
//! unary   := '!' unary | primary
//! primary := 'H' '^' NUM ['!'] atom    hold for NUM+1 consecutive steps
//!          | '[' seq ']' '^' '[' NUM ',' NUM ']'
//!          | '(' seq ')'
//! atom    := 'true' | IDENT
//! ```
//!
//! `·`, `∧`, `∨` and `¬` are accepted as aliases of `.`, `&`, `|` and `!`.

mod parser;
mod semantics;

use std::fmt;

pub use parser::{parse_twtl, parse_with_alphabet, ParseError};
pub use semantics::{check_satisfaction, time_bound};

/// Maximum number of atomic propositions a [`Symbol`] can carry.
pub const MAX_PROPOSITIONS: usize = 64;

/// Ordered, finite set of atomic proposition names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    /// Builds an alphabet from distinct names. Duplicates are dropped, order is kept.
    ///
    /// Panics if more than [`MAX_PROPOSITIONS`] distinct names are given.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut alphabet = Alphabet::default();
        for name in names {
            alphabet.insert(name.into());
        }
        alphabet
    }

    /// Returns the index of `name`, adding it if absent.
    pub fn insert(&mut self, name: String) -> usize {
        if let Some(i) = self.index_of(&name) {
            return i;
        }
        assert!(
            self.names.len() < MAX_PROPOSITIONS,
            "alphabet limited to {MAX_PROPOSITIONS} propositions"
        );
        self.names.push(name);
        self.names.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Symbol holding exactly the named propositions, or the first unknown name.
    pub fn symbol<S: AsRef<str>>(&self, props: &[S]) -> Result<Symbol, String> {
        let mut sym = Symbol::EMPTY;
        for p in props {
            let i = self.index_of(p.as_ref()).ok_or_else(|| p.as_ref().to_string())?;
            sym = sym.with(i);
        }
        Ok(sym)
    }

    /// Names of the propositions set in `sym`, in alphabet order.
    pub fn names_in(&self, sym: Symbol) -> Vec<&str> {
        (0..self.len())
            .filter(|&i| sym.contains(i))
            .map(|i| self.name(i))
            .collect()
    }
}

/// A subset of the alphabet, stored as a bitmask over proposition indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Symbol(pub u64);

impl Symbol {
    pub const EMPTY: Symbol = Symbol(0);

    pub fn contains(self, prop: usize) -> bool {
        self.0 >> prop & 1 == 1
    }

    pub fn with(self, prop: usize) -> Symbol {
        Symbol(self.0 | 1 << prop)
    }
}

/// A finite word: the symbol observed at each time step, starting at time 0.
pub type Word = Vec<Symbol>;

/// Operand of a hold: the constant `true` or a proposition index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Atom {
    True,
    Prop(usize),
}

impl Atom {
    pub fn holds_in(self, sym: Symbol) -> bool {
        match self {
            Atom::True => true,
            Atom::Prop(i) => sym.contains(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    /// `H^d s` (or `H^d !s` when `negated`): the atom holds (is absent) at
    /// `duration + 1` consecutive steps.
    Hold {
        duration: u32,
        atom: Atom,
        negated: bool,
    },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Concat(Box<Formula>, Box<Formula>),
    /// `[inner]^[start,end]`, with `start <= end`.
    Within {
        inner: Box<Formula>,
        start: u32,
        end: u32,
    },
}

impl Formula {
    pub fn hold(duration: u32, atom: Atom) -> Formula {
        Formula::Hold {
            duration,
            atom,
            negated: false,
        }
    }

    pub fn hold_not(duration: u32, atom: Atom) -> Formula {
        Formula::Hold {
            duration,
            atom,
            negated: true,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn concat(a: Formula, b: Formula) -> Formula {
        Formula::Concat(Box::new(a), Box::new(b))
    }

    /// Panics if `start > end`.
    pub fn within(inner: Formula, start: u32, end: u32) -> Formula {
        assert!(start <= end, "window [{start},{end}] is empty");
        Formula::Within {
            inner: Box::new(inner),
            start,
            end,
        }
    }

    /// Sorted, deduplicated proposition indices mentioned by the formula.
    pub fn propositions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_props(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_props(&self, out: &mut Vec<usize>) {
        match self {
            Formula::Hold { atom, .. } => {
                if let Atom::Prop(i) = atom {
                    out.push(*i);
                }
            }
            Formula::Not(f) => f.collect_props(out),
            Formula::Within { inner, .. } => inner.collect_props(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Concat(a, b) => {
                a.collect_props(out);
                b.collect_props(out);
            }
        }
    }

    /// Height of the syntax tree; a lone hold has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Hold { .. } => 0,
            Formula::Not(f) => 1 + f.depth(),
            Formula::Within { inner, .. } => 1 + inner.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Concat(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// True when the formula contains no negation of any kind.
    pub fn is_positive(&self) -> bool {
        match self {
            Formula::Hold { negated, .. } => !negated,
            Formula::Not(_) => false,
            Formula::Within { inner, .. } => inner.is_positive(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Concat(a, b) => {
                a.is_positive() && b.is_positive()
            }
        }
    }

    /// Renders the formula in the concrete syntax, using names from `alphabet`.
    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> DisplayFormula<'a> {
        DisplayFormula {
            formula: self,
            alphabet,
        }
    }
}

pub struct DisplayFormula<'a> {
    formula: &'a Formula,
    alphabet: &'a Alphabet,
}

// Binding strength: concat < or < and < unary.
const PREC_SEQ: u8 = 0;
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_UNARY: u8 = 3;

impl DisplayFormula<'_> {
    fn write(&self, f: &Formula, ctx: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prec, left, right, op) = match f {
            Formula::Concat(a, b) => (PREC_SEQ, a, b, " . "),
            Formula::Or(a, b) => (PREC_OR, a, b, " | "),
            Formula::And(a, b) => (PREC_AND, a, b, " & "),
            Formula::Not(inner) => {
                out.write_str("!")?;
                return self.write(inner, PREC_UNARY, out);
            }
            Formula::Hold {
                duration,
                atom,
                negated,
            } => {
                write!(out, "H^{duration} {}", if *negated { "!" } else { "" })?;
                return match atom {
                    Atom::True => out.write_str("true"),
                    Atom::Prop(i) => out.write_str(self.alphabet.name(*i)),
                };
            }
            Formula::Within { inner, start, end } => {
                out.write_str("[")?;
                self.write(inner, PREC_SEQ, out)?;
                return write!(out, "]^[{start},{end}]");
            }
        };
        let parens = ctx > prec;
        if parens {
            out.write_str("(")?;
        }
        self.write(left, prec, out)?;
        out.write_str(op)?;
        // All binary operators associate to the left.
        self.write(right, prec + 1, out)?;
        if parens {
            out.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for DisplayFormula<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.formula, PREC_SEQ, out)
    }
}
