//! One agent's environment: a grid, the agent's local machine, and the
//! labeling function tying the two together.
//!
//! Movement is deterministic; walls and one-way cells constrain geometry,
//! and door cells are gated by the machine: a door opens only once its
//! event can no longer be consumed anywhere in the machine's future — i.e.
//! once the event has been processed.
//!
//! Labeling emits at most one event per step. An event can come from a
//! trigger cell (on enter, while occupied, or on exit), from a sensor cell
//! (like a trigger, but also conditioned on the episode's accident draw),
//! or passively (events with no cell in this agent's grid are emitted
//! whenever the machine can consume them, subject to the same accident
//! conditioning). Every emission is gated on the machine having a defined
//! transition for the event, so emitted events are always consumable.
//!
//! When several candidates are enabled in the same step, the first by a
//! fixed priority wins: current-cell bindings in declaration order, then
//! exit bindings of the left cell, then passive events in alphabet order.
//! In the shipped layouts this matters only inside the trap region, where
//! the signal cell outranks the passive door observation.

use rand::Rng;

use crate::envs::{Accident, EpisodeCtx, TaskKind};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::grid::{Action, Cell, CellKind, GridSpec, TriggerOn};
use crate::rm::{RewardMachine, StateId};

#[derive(Debug, Clone)]
pub struct LocalEnv {
    agent: usize,
    kind: TaskKind,
    grid: GridSpec,
    machine: RewardMachine,
    start: Cell,
    passive: Vec<Event>,
    /// door_open[u][event index]: true when the event is consumable nowhere
    /// in the machine's future from u.
    door_open: Vec<Vec<bool>>,
    /// Dense index over non-wall cells for Q-table addressing.
    cell_idx: Vec<Option<usize>>,
    open_cells: Vec<Cell>,
}

impl LocalEnv {
    /// Builds the environment for `agent` (0-based) from its grid and local
    /// machine. The grid must declare a start for the agent (1-based in
    /// layout files) and may only reference events from the machine's
    /// alphabet.
    pub fn new(agent: usize, kind: TaskKind, grid: GridSpec, machine: RewardMachine) -> Result<Self> {
        let start = grid.start(agent as u8 + 1).ok_or_else(|| {
            Error::invalid(format!("layout has no start cell for agent {}", agent + 1))
        })?;
        for e in grid.referenced_events() {
            if !machine.alphabet().contains(&e) {
                return Err(Error::invalid(format!(
                    "layout references event '{e}' outside agent {}'s alphabet",
                    agent + 1
                )));
            }
        }
        let emitting = grid.emitting_events();
        let passive: Vec<Event> = machine
            .alphabet()
            .iter()
            .filter(|e| !emitting.contains(e))
            .cloned()
            .collect();
        let door_open = compute_door_gates(&machine);
        let open_cells = grid.open_cells();
        let mut cell_idx = vec![None; grid.num_cells()];
        for (i, &c) in open_cells.iter().enumerate() {
            cell_idx[grid.cell_index(c)] = Some(i);
        }
        Ok(LocalEnv {
            agent,
            kind,
            grid,
            machine,
            start,
            passive,
            door_open,
            cell_idx,
            open_cells,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn machine(&self) -> &RewardMachine {
        &self.machine
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    /// Events this agent emits passively (no cell in its grid).
    pub fn passive_events(&self) -> &[Event] {
        &self.passive
    }

    /// Number of distinct agent positions, for Q-table sizing.
    pub fn state_count(&self) -> usize {
        self.open_cells.len()
    }

    /// Dense index of a (non-wall) cell.
    pub fn state_index(&self, cell: Cell) -> usize {
        self.cell_idx[self.grid.cell_index(cell)]
            .unwrap_or_else(|| panic!("agent {} cannot occupy a wall cell", self.agent + 1))
    }

    /// Draws the per-episode context for solo training in this environment.
    pub fn draw_ctx(&self, rng: &mut impl Rng) -> EpisodeCtx {
        draw_ctx(self.kind, rng)
    }

    /// True when the door event is no longer consumable from `u`, i.e. the
    /// door has been unlocked by the machine's progress.
    pub fn door_is_open(&self, u: StateId, event: &Event) -> bool {
        match self.machine.alphabet().index_of(event) {
            Some(ei) => self.door_open[u][ei],
            None => true,
        }
    }

    /// Deterministic movement: returns the next cell, staying in place when
    /// the move is blocked by a wall, a one-way constraint, or a shut door.
    pub fn local_step(&self, s: Cell, u: StateId, a: Action) -> Cell {
        if a == Action::Stay {
            return s;
        }
        if let CellKind::OneWay { dir } = self.grid.kind(s) {
            if a != *dir {
                return s;
            }
        }
        let (dr, dc) = a.delta();
        let (nr, nc) = (s.0 as i32 + dr, s.1 as i32 + dc);
        if !self.grid.in_bounds(nr, nc) {
            return s;
        }
        let target = (nr as usize, nc as usize);
        match self.grid.kind(target) {
            CellKind::Wall => s,
            CellKind::OneWay { dir } if a == dir.opposite() => s,
            CellKind::Door { event } if !self.door_is_open(u, event) => s,
            _ => target,
        }
    }

    /// The labeling function: at most one event for the move `prev -> cur`
    /// made at machine state `u`, resolved by the priority described in the
    /// module docs when several candidates are enabled.
    pub fn local_label(
        &self,
        prev: Cell,
        u: StateId,
        cur: Cell,
        ctx: &EpisodeCtx,
    ) -> Option<Event> {
        let mut candidates: Vec<Event> = Vec::new();
        let mut consider = |e: &Event, machine: &RewardMachine| {
            if machine.delta(u, e).is_some() && !candidates.contains(e) {
                candidates.push(e.clone());
            }
        };

        match self.grid.kind(cur) {
            CellKind::Trigger { bindings } => {
                for (e, on) in bindings {
                    let fires = match on {
                        TriggerOn::Enter => cur != prev,
                        TriggerOn::Stay => true,
                        TriggerOn::Exit => false,
                    };
                    if fires {
                        consider(e, &self.machine);
                    }
                }
            }
            CellKind::Sensor { event } => {
                if sensor_allows(self.kind, event, ctx) {
                    consider(event, &self.machine);
                }
            }
            _ => {}
        }
        if prev != cur {
            if let CellKind::Trigger { bindings } = self.grid.kind(prev) {
                for (e, on) in bindings {
                    if *on == TriggerOn::Exit {
                        consider(e, &self.machine);
                    }
                }
            }
        }
        for e in &self.passive {
            if passive_allows(self.kind, e, ctx) {
                consider(e, &self.machine);
            }
        }

        candidates.into_iter().next()
    }
}

/// Accident-conditioned sensor gating: the laboratory's fire sensor reads F
/// only in fire episodes and the radiation sensor reads R only in radiation
/// episodes. Other kinds and events are unconditioned.
fn sensor_allows(kind: TaskKind, event: &Event, ctx: &EpisodeCtx) -> bool {
    if kind != TaskKind::Laboratory {
        return true;
    }
    match event.name() {
        "F" => ctx.accident == Some(Accident::Fire),
        "R" => ctx.accident == Some(Accident::Radiation),
        _ => true,
    }
}

/// Accident-conditioned passive gating: an agent observes the other wing's
/// tool event only in the episodes where that wing is active — M (handling
/// the radiation leak) only under radiation, E (extinguishing) only under
/// fire. Without this, the event would be consumable in episodes whose
/// accident makes it impossible, breaking decomposability of the labeling.
fn passive_allows(kind: TaskKind, event: &Event, ctx: &EpisodeCtx) -> bool {
    if kind != TaskKind::Laboratory {
        return true;
    }
    match event.name() {
        "M" => ctx.accident == Some(Accident::Radiation),
        "E" => ctx.accident == Some(Accident::Fire),
        _ => true,
    }
}

/// Draws the per-episode context for a task kind.
pub fn draw_ctx(kind: TaskKind, rng: &mut impl Rng) -> EpisodeCtx {
    match kind {
        TaskKind::Laboratory => EpisodeCtx {
            accident: Some(if rng.gen_bool(0.5) {
                Accident::Fire
            } else {
                Accident::Radiation
            }),
        },
        _ => EpisodeCtx::default(),
    }
}

/// For each state and event: can the event still be consumed now or later?
/// A door is open exactly when it cannot.
fn compute_door_gates(machine: &RewardMachine) -> Vec<Vec<bool>> {
    let n = machine.num_states();
    let m = machine.alphabet().len();
    // reach[u] = states reachable from u (including u).
    let mut reach: Vec<Vec<bool>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut seen = vec![false; n];
        let mut queue = vec![u];
        seen[u] = true;
        while let Some(v) = queue.pop() {
            for e in machine.alphabet().iter() {
                if let Some(w) = machine.delta(v, e) {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push(w);
                    }
                }
            }
        }
        reach.push(seen);
    }
    (0..n)
        .map(|u| {
            (0..m)
                .map(|ei| {
                    let e = machine.alphabet().get(ei).clone();
                    !(0..n).any(|v| reach[u][v] && machine.delta(v, &e).is_some())
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventAlphabet;
    use crate::projection::project;
    use crate::rm::tests::generator_rm;

    fn generator_agent1() -> LocalEnv {
        let team = generator_rm();
        let local = project(&team, &EventAlphabet::from_names(&["P", "D"]).unwrap()).unwrap();
        let grid = crate::grid::parse_layout(
            "\
#######
#1...P#
#v#####
#s....#
#######
legend:
1 = start 1
P = trigger P on enter
v = one-way down
s = trigger D on stay
",
        )
        .unwrap();
        LocalEnv::new(0, TaskKind::Generator, grid, local.machine().clone()).unwrap()
    }

    fn generator_agent2() -> LocalEnv {
        let team = generator_rm();
        let local = project(&team, &EventAlphabet::from_names(&["D", "G"]).unwrap()).unwrap();
        let grid = crate::grid::parse_layout(
            "\
######
#2..##
##d###
#.G.##
######
legend:
2 = start 2
d = door D
G = trigger G on enter
",
        )
        .unwrap();
        LocalEnv::new(1, TaskKind::Generator, grid, local.machine().clone()).unwrap()
    }

    #[test]
    fn walls_and_stay() {
        let env = generator_agent1();
        let u = env.machine().initial();
        assert_eq!(env.local_step((1, 1), u, Action::Up), (1, 1));
        assert_eq!(env.local_step((1, 1), u, Action::Left), (1, 1));
        assert_eq!(env.local_step((1, 1), u, Action::Stay), (1, 1));
        assert_eq!(env.local_step((1, 1), u, Action::Right), (1, 2));
    }

    #[test]
    fn one_way_ramp_cannot_be_climbed_back() {
        let env = generator_agent1();
        let u = env.machine().initial();
        // Down the ramp: (1,1) -> (2,1) -> (3,1).
        assert_eq!(env.local_step((1, 1), u, Action::Down), (2, 1));
        // On the ramp only the pointed direction makes progress.
        assert_eq!(env.local_step((2, 1), u, Action::Right), (2, 1));
        assert_eq!(env.local_step((2, 1), u, Action::Up), (2, 1));
        assert_eq!(env.local_step((2, 1), u, Action::Down), (3, 1));
        // From below, moving up against the arrow is blocked.
        assert_eq!(env.local_step((3, 1), u, Action::Up), (3, 1));
    }

    #[test]
    fn door_opens_once_event_processed() {
        let env = generator_agent2();
        let m = env.machine();
        let pre = m.initial();
        // Door cell (2,2) is shut while D is still consumable.
        assert_eq!(env.local_step((1, 2), pre, Action::Down), (1, 2));
        let (post, _) = m.step(pre, &Event::new("D")).unwrap();
        assert_ne!(post, pre);
        assert_eq!(env.local_step((1, 2), post, Action::Down), (2, 2));
    }

    #[test]
    fn trigger_labels_are_machine_gated() {
        let env = generator_agent1();
        let m = env.machine();
        let u0 = m.initial();
        let ctx = EpisodeCtx::default();
        // Entering the pipe cell emits P at the initial state...
        assert_eq!(
            env.local_label((1, 4), u0, (1, 5), &ctx),
            Some(Event::new("P"))
        );
        // ...but not again after P has been consumed.
        let (u1, _) = m.step(u0, &Event::new("P")).unwrap();
        assert_eq!(env.local_label((1, 4), u1, (1, 5), &ctx), None);
        // The switch emits D every step while occupied.
        assert_eq!(
            env.local_label((2, 1), u1, (3, 1), &ctx),
            Some(Event::new("D"))
        );
        assert_eq!(
            env.local_label((3, 1), u1, (3, 1), &ctx),
            Some(Event::new("D"))
        );
        // Plain cells emit nothing.
        assert_eq!(env.local_label((1, 1), u0, (1, 2), &ctx), None);
    }

    #[test]
    fn passive_event_needs_defined_transition() {
        let env = generator_agent2();
        let m = env.machine();
        let ctx = EpisodeCtx::default();
        // D has no cell in agent 2's grid, so it is passive and emitted
        // whenever consumable.
        assert_eq!(env.passive_events(), &[Event::new("D")]);
        let u0 = m.initial();
        assert_eq!(
            env.local_label((1, 1), u0, (1, 1), &ctx),
            Some(Event::new("D"))
        );
        let (u1, _) = m.step(u0, &Event::new("D")).unwrap();
        assert_eq!(env.local_label((1, 1), u1, (1, 1), &ctx), None);
    }

    #[test]
    fn laboratory_sensor_and_passive_conditioning() {
        let team = crate::rm::tests::laboratory_rm();
        let local1 = project(&team, &EventAlphabet::from_names(&["C", "F", "E", "M"]).unwrap())
            .unwrap();
        let grid = crate::grid::parse_layout(
            "\
#####
#1cx#
#####
legend:
1 = start 1
c = trigger C on stay
x = sensor F
",
        )
        .unwrap();
        let env = LocalEnv::new(0, TaskKind::Laboratory, grid, local1.machine().clone()).unwrap();
        let m = env.machine();
        let (u1, _) = m.step(m.initial(), &Event::new("C")).unwrap();
        let fire = EpisodeCtx {
            accident: Some(Accident::Fire),
        };
        let radiation = EpisodeCtx {
            accident: Some(Accident::Radiation),
        };
        // The fire sensor reads F only in fire episodes.
        assert_eq!(
            env.local_label((1, 2), u1, (1, 3), &fire),
            Some(Event::new("F"))
        );
        // In radiation episodes the sensor is silent and the passive M (the
        // other wing completing) is observable instead.
        assert_eq!(
            env.local_label((1, 2), u1, (1, 3), &radiation),
            Some(Event::new("M"))
        );
        // Pre-accident, nothing is emitted on plain movement.
        assert_eq!(
            env.local_label((1, 1), m.initial(), (1, 2), &radiation),
            Some(Event::new("C"))
        );
    }

    #[test]
    fn candidate_priority_is_deterministic() {
        // Two passive events consumable at once resolve in alphabet order.
        let rm = crate::rm::parse_rm(
            "alphabet: A B\nstates: s0 s1\ninitial: s0\nterminal: s1\ns0 -A-> s1\ns0 -B-> s1\n",
        )
        .unwrap();
        let grid = crate::grid::parse_layout("###\n#1#\n###\nlegend:\n1 = start 1\n").unwrap();
        let env = LocalEnv::new(0, TaskKind::Generator, grid, rm).unwrap();
        assert_eq!(
            env.local_label((1, 1), 0, (1, 1), &EpisodeCtx::default()),
            Some(Event::new("A"))
        );
        // A trigger on the occupied cell outranks a passive event.
        let rm = crate::rm::parse_rm(
            "alphabet: A B\nstates: s0 s1\ninitial: s0\nterminal: s1\ns0 -A-> s1\ns0 -B-> s1\n",
        )
        .unwrap();
        let grid = crate::grid::parse_layout(
            "####\n#1b#\n####\nlegend:\n1 = start 1\nb = trigger B on stay\n",
        )
        .unwrap();
        let env = LocalEnv::new(0, TaskKind::Generator, grid, rm).unwrap();
        assert_eq!(
            env.local_label((1, 1), 0, (1, 2), &EpisodeCtx::default()),
            Some(Event::new("B"))
        );
    }

    #[test]
    fn foreign_layout_event_rejected() {
        let rm = crate::rm::parse_rm(
            "alphabet: A\nstates: s0 s1\ninitial: s0\nterminal: s1\ns0 -A-> s1\n",
        )
        .unwrap();
        let grid = crate::grid::parse_layout(
            "####\n#1z#\n####\nlegend:\n1 = start 1\nz = trigger Z on enter\n",
        )
        .unwrap();
        assert!(LocalEnv::new(0, TaskKind::Generator, grid, rm).is_err());
    }

    #[test]
    fn accident_draw_is_balanced_and_seedable() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut fires = 0u32;
        for _ in 0..10_000 {
            if draw_ctx(TaskKind::Laboratory, &mut rng).accident == Some(Accident::Fire) {
                fires += 1;
            }
        }
        let freq = f64::from(fires) / 10_000.0;
        assert!((freq - 0.5).abs() < 0.02, "fire frequency {freq}");
        // Same seed, same draws.
        let mut a = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut b = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(
                draw_ctx(TaskKind::Laboratory, &mut a),
                draw_ctx(TaskKind::Laboratory, &mut b)
            );
        }
        assert_eq!(draw_ctx(TaskKind::Generator, &mut a), EpisodeCtx::default());
    }
}
