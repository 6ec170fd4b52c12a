//! Event-based reward machines for cooperative multi-agent tasks.
//!
//! The crate implements a pipeline for decentralizing a team task that is
//! specified as a reward machine over discrete events:
//!
//! 1. [`rm`] — reward machines with partial transitions and a 0/1
//!    task-completion reward, plus a small text format for them.
//! 2. [`projection`] — projection of a team machine onto the event subset a
//!    single agent can observe.
//! 3. [`compose`] — parallel composition, equivalence checking, and the
//!    strict/relaxed decomposition criteria.
//! 4. [`ltlf`] / [`tlcd`] — finite-trace temporal formulas, temporal-causal
//!    diagrams, and their compilation into DFAs.
//! 5. [`tilde`] — local machines augmented with a causal DFA, the value table
//!    used to cut off episodes that can no longer succeed.
//! 6. [`grid`] / [`envs`] — gridworld environments for the three case-study
//!    tasks (generator, laboratory, buttons).
//! 7. [`train`] / [`harness`] — tabular Q-learning (centralized and
//!    decentralized) and the experiment harness that produces CSV/SVG output.

pub mod compose;
pub mod dfa;
pub mod envs;
pub mod error;
pub mod event;
pub mod grid;
pub mod harness;
pub mod ltlf;
pub mod plot;
pub mod projection;
pub mod rm;
pub mod tilde;
pub mod tlcd;
pub mod train;

pub use error::{Error, Result};
