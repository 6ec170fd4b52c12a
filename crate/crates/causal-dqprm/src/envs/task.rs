//! Task definitions: a TOML file binding the team machine, per-agent
//! alphabets and layouts, optional causal diagrams, and the training-time
//! synchronization probability.
//!
//! ```toml
//! kind = "generator"
//! rm = "generator.rm"
//! tlcd = "generator.tlcd"      # team-level, optional
//! p_sync = 0.3
//!
//! [[agents]]
//! alphabet = ["P", "D"]
//! layout = "generator_agent1.layout"
//! tlcd = "generator.tlcd"      # per-agent expediting diagram, optional
//!
//! [[agents]]
//! alphabet = ["D", "G"]
//! layout = "generator_agent2.layout"
//! ```
//!
//! Relative paths resolve against the task file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::envs::team::TeamEnv;
use crate::error::{Error, Result};
use crate::event::EventAlphabet;
use crate::grid::{parse_layout, GridSpec};
use crate::rm::{parse_rm, RewardMachine};
use crate::tlcd::{parse_tlcd, CausalDfa, Tlcd};

/// Which case study a task file describes. The kind selects the labeling
/// hooks (the laboratory's accident conditioning); geometry and machines
/// all come from the bound files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Generator,
    Laboratory,
    Buttons,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<TaskKind> {
        match s {
            "generator" => Ok(TaskKind::Generator),
            "laboratory" => Ok(TaskKind::Laboratory),
            "buttons" => Ok(TaskKind::Buttons),
            other => Err(Error::invalid(format!(
                "unknown task kind '{other}' (expected generator, laboratory, or buttons)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Generator => "generator",
            TaskKind::Laboratory => "laboratory",
            TaskKind::Buttons => "buttons",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    kind: String,
    rm: String,
    #[serde(default)]
    tlcd: Option<String>,
    #[serde(default)]
    p_sync: Option<f64>,
    agents: Vec<AgentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    alphabet: Vec<String>,
    layout: String,
    #[serde(default)]
    tlcd: Option<String>,
}

/// One agent's bound data.
#[derive(Debug, Clone)]
pub struct LoadedAgent {
    pub alphabet: EventAlphabet,
    pub grid: GridSpec,
    pub tlcd: Option<Tlcd>,
}

/// A fully parsed and validated task.
#[derive(Debug, Clone)]
pub struct LoadedTask {
    pub kind: TaskKind,
    pub team: RewardMachine,
    pub team_tlcd: Option<Tlcd>,
    pub p_sync: f64,
    pub agents: Vec<LoadedAgent>,
    /// Directory the task file lived in, for diagnostics.
    pub dir: PathBuf,
}

impl LoadedTask {
    /// Builds a fresh team environment (cheap; one per training run).
    pub fn team_env(&self) -> Result<TeamEnv> {
        TeamEnv::new(
            self.kind,
            self.team.clone(),
            self.agents
                .iter()
                .map(|a| (a.alphabet.clone(), a.grid.clone()))
                .collect(),
        )
    }

    pub fn local_alphabets(&self) -> Vec<EventAlphabet> {
        self.agents.iter().map(|a| a.alphabet.clone()).collect()
    }

    /// The team-level causal DFA, compiled over the team alphabet.
    pub fn team_causal(&self) -> Result<Option<CausalDfa>> {
        match &self.team_tlcd {
            Some(t) => Ok(Some(t.compile(self.team.alphabet())?)),
            None => Ok(None),
        }
    }

    /// Agent `i`'s causal DFA over its local alphabet; a degenerate
    /// all-accepting DFA when the task supplies none.
    pub fn agent_causal(&self, i: usize) -> Result<CausalDfa> {
        let agent = &self.agents[i];
        match &agent.tlcd {
            Some(t) => t.compile(&agent.alphabet),
            None => Ok(CausalDfa::trivial(agent.alphabet.clone())),
        }
    }
}

fn read_rel(dir: &Path, rel: &str) -> Result<String> {
    let path = dir.join(rel);
    fs::read_to_string(&path)
        .map_err(|e| Error::invalid(format!("cannot read '{}': {e}", path.display())))
}

/// Loads and validates a task file. All referenced files are parsed, the
/// alphabets checked for coverage, and the environment constructed once to
/// surface layout problems eagerly.
pub fn load_task(path: &Path) -> Result<LoadedTask> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read '{}': {e}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let file: TaskFile = toml::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;

    let kind = TaskKind::parse(&file.kind)?;
    let p_sync = file.p_sync.unwrap_or(0.3);
    if !(p_sync > 0.0 && p_sync <= 1.0) {
        return Err(Error::invalid(format!(
            "p_sync must be in (0, 1], got {p_sync}"
        )));
    }
    let team = parse_rm(&read_rel(&dir, &file.rm)?)?;
    let team_tlcd = match &file.tlcd {
        Some(rel) => {
            let t = parse_tlcd(&read_rel(&dir, rel)?)?;
            check_atoms(&t, team.alphabet(), "team causal diagram")?;
            Some(t)
        }
        None => None,
    };

    if file.agents.is_empty() {
        return Err(Error::invalid("task defines no agents"));
    }
    let mut agents = Vec::with_capacity(file.agents.len());
    for (i, a) in file.agents.iter().enumerate() {
        let names: Vec<&str> = a.alphabet.iter().map(String::as_str).collect();
        let alphabet = EventAlphabet::from_names(&names)?;
        let grid = parse_layout(&read_rel(&dir, &a.layout)?)?;
        let tlcd = match &a.tlcd {
            Some(rel) => {
                let t = parse_tlcd(&read_rel(&dir, rel)?)?;
                check_atoms(&t, &alphabet, &format!("agent {}'s causal diagram", i + 1))?;
                Some(t)
            }
            None => None,
        };
        agents.push(LoadedAgent {
            alphabet,
            grid,
            tlcd,
        });
    }

    let task = LoadedTask {
        kind,
        team,
        team_tlcd,
        p_sync,
        agents,
        dir,
    };
    // Construct the environment once so coverage and layout mistakes fail
    // at load time, not mid-experiment.
    task.team_env()?;
    Ok(task)
}

fn check_atoms(tlcd: &Tlcd, alphabet: &EventAlphabet, what: &str) -> Result<()> {
    for atom in tlcd.formula().atoms() {
        if !alphabet.contains(&atom) {
            return Err(Error::invalid(format!(
                "{what} mentions event '{atom}' outside the applicable alphabet"
            )));
        }
    }
    Ok(())
}
