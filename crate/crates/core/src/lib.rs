//! Allocation of Time Window Temporal Logic (TWTL) tasks to a fleet of robots
//! whose transition probabilities are only partially known.
//!
//! The crate is organised bottom-up:
//!
//! - [`twtl`]: formula AST, parser, printer and the direct recursive semantics.
//! - [`automata`]: compilation of formulas into deterministic finite automata.
//! - [`mdp`]: labeled MDPs and the grid-world robot models with slip uncertainty.
//! - [`synthesis`]: product MDPs, distance-to-acceptance and the greedy
//!   distance policy.
//! - [`bounds`]: static, Wilson-score and adaptive satisfaction lower bounds.
//! - [`learning`]: tabular Q-learning and TD(0) value estimation.
//! - [`allocation`]: the probabilistic assignment program and its solver.
//! - [`agent`] / [`orchestrator`]: per-robot episode execution and the
//!   coordinator loop.
//! - [`scenario`] / [`harness`]: scenario files and the experiment drivers.

pub mod agent;
pub mod allocation;
pub mod automata;
pub mod bounds;
mod clock;
pub mod harness;
pub mod learning;
pub mod mdp;
pub mod orchestrator;
pub mod scenario;
pub mod synthesis;
pub mod twtl;

pub use allocation::{AllocationInput, AllocationMatrix};
pub use automata::Dfa;
pub use mdp::LabeledMdp;
pub use synthesis::{Policy, ProductMdp};
pub use twtl::{Alphabet, Formula, Symbol, Word};
