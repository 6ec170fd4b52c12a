//! The multi-agent gridworld environments behind the three case studies.
//!
//! Each agent lives in its own small grid ([`local::LocalEnv`]) with
//! movement gated by its machine state; the team environment
//! ([`team::TeamEnv`]) steps all agents together and assembles the team
//! label by unanimity over each event's sharer set. Task definitions
//! ([`task`]) bind machines, layouts, alphabets, and causal diagrams
//! together from a TOML file.

pub mod local;
pub mod task;
pub mod team;

pub use local::LocalEnv;
pub use task::{load_task, LoadedAgent, LoadedTask, TaskKind};
pub use team::{SyncOracle, TeamEnv};

/// Which accident a laboratory episode drew.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accident {
    Fire,
    Radiation,
}

/// Per-episode context consulted by labeling hooks. Environments without
/// accidents leave it empty.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeCtx {
    pub accident: Option<Accident>,
}
