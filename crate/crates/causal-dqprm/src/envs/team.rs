//! The team environment: all agents stepping together under the team
//! machine, with the team label assembled by unanimity over each event's
//! sharer set.

use rand::Rng;

use crate::envs::local::{draw_ctx, LocalEnv};
use crate::envs::{Accident, EpisodeCtx, TaskKind};
use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet, LabelSet};
use crate::grid::{Action, Cell, CellKind, GridSpec, TriggerOn};
use crate::projection::{project, ProjectedRm};
use crate::rm::{RewardMachine, StateId};

/// How shared events advance local machines: during decentralized training
/// the other sharers are simulated by a per-step Bernoulli draw; during
/// execution an event fires only by actual unanimity (which the team
/// environment establishes itself, so the oracle always concurs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncOracle {
    Training { p_sync: f64 },
    Execution,
}

impl SyncOracle {
    pub fn training(p_sync: f64) -> Result<Self> {
        if !(p_sync > 0.0 && p_sync <= 1.0) {
            return Err(Error::invalid(format!(
                "synchronization probability must be in (0, 1], got {p_sync}"
            )));
        }
        Ok(SyncOracle::Training { p_sync })
    }

    pub fn execution() -> Self {
        SyncOracle::Execution
    }

    /// Does an emitted event with `sharers` participating agents advance the
    /// local machine this step?
    pub fn advances(&self, sharers: usize, rng: &mut impl Rng) -> bool {
        match self {
            SyncOracle::Training { p_sync } => sharers <= 1 || rng.gen_bool(*p_sync),
            SyncOracle::Execution => true,
        }
    }
}

/// Joint configuration: one cell per agent plus the team machine state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamState {
    pub cells: Vec<Cell>,
    pub u: StateId,
}

/// Result of one joint step.
#[derive(Debug, Clone)]
pub struct TeamOutcome {
    pub next: TeamState,
    /// What each agent's labeling function emitted.
    pub emissions: Vec<Option<Event>>,
    /// The unanimous team label (at most one event per sharer set).
    pub label: LabelSet,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct TeamEnv {
    kind: TaskKind,
    team: RewardMachine,
    locals: Vec<LocalEnv>,
    projections: Vec<ProjectedRm>,
    /// sharers[team alphabet index] = agents whose local event set contains
    /// the event.
    sharers: Vec<Vec<usize>>,
    dead: Vec<bool>,
}

impl TeamEnv {
    /// Builds the team environment from the team machine and one (alphabet,
    /// grid) pair per agent. Local machines are the projections of the team
    /// machine onto the given alphabets, which must jointly cover the team
    /// alphabet.
    pub fn new(
        kind: TaskKind,
        team: RewardMachine,
        agents: Vec<(EventAlphabet, GridSpec)>,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("a team needs at least one agent"));
        }
        let mut union: Option<EventAlphabet> = None;
        for (alphabet, _) in &agents {
            if !team.alphabet().is_superset_of(alphabet) {
                return Err(Error::invalid(
                    "local event sets must be subsets of the team alphabet",
                ));
            }
            union = Some(match union {
                None => alphabet.clone(),
                Some(u) => u.union(alphabet),
            });
        }
        if !union.expect("nonempty").same_set(team.alphabet()) {
            return Err(Error::invalid(
                "local event sets must jointly cover the team alphabet",
            ));
        }

        let mut locals = Vec::with_capacity(agents.len());
        let mut projections = Vec::with_capacity(agents.len());
        for (i, (alphabet, grid)) in agents.into_iter().enumerate() {
            let proj = project(&team, &alphabet)?;
            locals.push(LocalEnv::new(i, kind, grid, proj.machine().clone())?);
            projections.push(proj);
        }
        let sharers = team
            .alphabet()
            .iter()
            .map(|e| {
                (0..locals.len())
                    .filter(|&i| locals[i].machine().alphabet().contains(e))
                    .collect()
            })
            .collect();
        let mut dead = vec![false; team.num_states()];
        for u in team.dead_states() {
            dead[u] = true;
        }
        Ok(TeamEnv {
            kind,
            team,
            locals,
            projections,
            sharers,
            dead,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn num_agents(&self) -> usize {
        self.locals.len()
    }

    pub fn team_machine(&self) -> &RewardMachine {
        &self.team
    }

    pub fn local(&self, i: usize) -> &LocalEnv {
        &self.locals[i]
    }

    pub fn projection(&self, i: usize) -> &ProjectedRm {
        &self.projections[i]
    }

    /// The sharer set I_e of a team-alphabet event.
    pub fn sharers(&self, e: &Event) -> Result<&[usize]> {
        let ei = self
            .team
            .alphabet()
            .index_of(e)
            .ok_or_else(|| Error::invalid(format!("event '{e}' is not in the team alphabet")))?;
        Ok(&self.sharers[ei])
    }

    /// The local machine state corresponding to a team state.
    pub fn local_state(&self, agent: usize, team_u: StateId) -> Result<StateId> {
        self.projections[agent].state_for(team_u).ok_or_else(|| {
            Error::internal(format!(
                "team state '{}' has no image in agent {}'s projection",
                self.team.state_name(team_u),
                agent + 1
            ))
        })
    }

    /// Episode done at accepting states and at states from which acceptance
    /// is no longer reachable.
    pub fn is_done_state(&self, u: StateId) -> bool {
        self.team.is_terminal(u) || self.dead[u]
    }

    /// Starts an episode: initial cells and machine state plus the episode
    /// context (accident draw for the laboratory).
    pub fn reset(&self, rng: &mut impl Rng) -> (TeamState, EpisodeCtx) {
        let state = TeamState {
            cells: self.locals.iter().map(|l| l.start()).collect(),
            u: self.team.initial(),
        };
        (state, draw_ctx(self.kind, rng))
    }

    /// The laboratory's per-episode accident draw.
    pub fn draw_accident(&self, rng: &mut impl Rng) -> Result<Accident> {
        if self.kind != TaskKind::Laboratory {
            return Err(Error::invalid("only the laboratory draws accidents"));
        }
        Ok(draw_ctx(self.kind, rng)
            .accident
            .expect("laboratory context carries an accident"))
    }

    /// One joint step: moves every agent, collects emissions, forms the
    /// unanimous team label, and advances the team machine on it.
    pub fn team_step(
        &self,
        state: &TeamState,
        actions: &[Action],
        ctx: &EpisodeCtx,
    ) -> Result<TeamOutcome> {
        if actions.len() != self.locals.len() {
            return Err(Error::invalid(format!(
                "expected {} actions, got {}",
                self.locals.len(),
                actions.len()
            )));
        }
        let mut cells = Vec::with_capacity(self.locals.len());
        let mut emissions = Vec::with_capacity(self.locals.len());
        for (i, local) in self.locals.iter().enumerate() {
            let u_i = self.local_state(i, state.u)?;
            let next = local.local_step(state.cells[i], u_i, actions[i]);
            emissions.push(local.local_label(state.cells[i], u_i, next, ctx));
            cells.push(next);
        }

        let mut team_events: Vec<Event> = Vec::new();
        for e in emissions.iter().flatten() {
            if team_events.contains(e) {
                continue;
            }
            let unanimous = self
                .sharers(e)?
                .iter()
                .all(|&i| emissions[i].as_ref() == Some(e));
            if unanimous {
                team_events.push(e.clone());
            }
        }
        let label = LabelSet::from_events(team_events);
        let (u, reward) = self.team.read_label_set(state.u, &label)?;
        let done = self.is_done_state(u);
        Ok(TeamOutcome {
            next: TeamState { cells, u },
            emissions,
            label,
            reward,
            done,
        })
    }

    /// True iff every sharer of the simultaneity event stands on one of its
    /// press cells this step — the two-agent button handshake.
    pub fn buttons_red_press(&self, state: &TeamState) -> Result<bool> {
        if self.kind != TaskKind::Buttons {
            return Err(Error::invalid("only the buttons task has a red button"));
        }
        let press = Event::new("B2");
        let sharers = self.sharers(&press)?;
        if sharers.len() < 2 {
            return Err(Error::invalid("the red button needs two sharers"));
        }
        Ok(sharers.iter().all(|&i| {
            let cell = state.cells[i];
            match self.locals[i].grid().kind(cell) {
                CellKind::Trigger { bindings } => bindings
                    .iter()
                    .any(|(e, on)| *e == press && *on == TriggerOn::Stay),
                _ => false,
            }
        }))
    }

    /// Runs one episode under uniformly random actions, returning the team
    /// event sequence (in consumption order) and whether the team accepted.
    pub fn rollout_random(
        &self,
        rng: &mut impl Rng,
        max_steps: usize,
    ) -> Result<(Vec<Event>, bool)> {
        let (mut state, ctx) = self.reset(rng);
        let mut events = Vec::new();
        for _ in 0..max_steps {
            let actions: Vec<Action> = (0..self.num_agents())
                .map(|_| Action::from_index(rng.gen_range(0..Action::ALL.len())))
                .collect();
            let out = self.team_step(&state, &actions, &ctx)?;
            events.extend(out.label.iter().cloned());
            state = out.next;
            if out.done {
                break;
            }
        }
        Ok((events, self.team.is_terminal(state.u)))
    }
}
