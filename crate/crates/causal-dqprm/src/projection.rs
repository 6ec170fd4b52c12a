//! Projection of a team reward machine onto a local event alphabet.
//!
//! Two team states are locally indistinguishable when they are related by the
//! smallest equivalence containing
//!
//! 1. every pair `(u, δ(u, e))` for a non-local event `e`, and
//! 2. the congruence rule: if `u ~ u'` and both have transitions on the local
//!    event `e`, the targets are related too.
//!
//! The projected machine is the quotient by that equivalence; its accepting
//! blocks are those containing a team terminal state.

use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::rm::{RewardMachine, StateId};

/// A partition of a machine's state set into equivalence blocks.
///
/// Blocks are ordered by their smallest member, so block ids are stable for a
/// given machine and alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<StateId>>,
}

impl Partition {
    fn from_union_find(mut uf: UnionFind) -> Partition {
        let n = uf.parent.len();
        let mut root_to_block: std::collections::HashMap<usize, usize> =
            std::collections::HashMap::new();
        let mut blocks: Vec<Vec<StateId>> = Vec::new();
        for u in 0..n {
            let r = uf.find(u);
            let b = *root_to_block.entry(r).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(u);
        }
        // Members are pushed in increasing order, so blocks[b][0] is the
        // smallest member; order blocks by it.
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by_key(|&b| blocks[b][0]);
        let mut sorted = Vec::with_capacity(blocks.len());
        let mut block_of = vec![0; n];
        for &b in &order {
            for &u in &blocks[b] {
                block_of[u] = sorted.len();
            }
            sorted.push(blocks[b].clone());
        }
        Partition { block_of, blocks: sorted }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, u: StateId) -> usize {
        self.block_of[u]
    }

    pub fn members(&self, block: usize) -> &[StateId] {
        &self.blocks[block]
    }

    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }

    pub fn same_block(&self, a: StateId, b: StateId) -> bool {
        self.block_of[a] == self.block_of[b]
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    /// Returns true when the two were in different classes.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Attach the larger root id under the smaller so representatives are
        // the smallest member of each class.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Computes the local-indistinguishability partition for `local`.
///
/// Implemented as a worklist fixpoint over a union-find: seed with the
/// non-local transition pairs, then re-apply the congruence rule until no
/// class changes. Each congruence pass unions, for every class and local
/// event, all defined transition targets of the class members; a pass that
/// performs no union terminates the loop.
pub fn compute_equivalence(rm: &RewardMachine, local: &EventAlphabet) -> Result<Partition> {
    for e in local.iter() {
        if !rm.alphabet().contains(e) {
            return Err(Error::invalid(format!(
                "local event '{e}' is not in the machine's alphabet"
            )));
        }
    }
    let n = rm.num_states();
    let mut uf = UnionFind::new(n);
    let nonlocal: Vec<Event> =
        rm.alphabet().iter().filter(|e| !local.contains(e)).cloned().collect();
    for u in 0..n {
        for e in &nonlocal {
            if let Some(v) = rm.delta(u, e) {
                uf.union(u, v);
            }
        }
    }
    let local_events: Vec<Event> = local.iter().cloned().collect();
    loop {
        let mut changed = false;
        // Group states by class representative, then align targets per event.
        let mut by_root: std::collections::HashMap<usize, Vec<StateId>> =
            std::collections::HashMap::new();
        for u in 0..n {
            let r = uf.find(u);
            by_root.entry(r).or_default().push(u);
        }
        for members in by_root.values() {
            for e in &local_events {
                let mut first: Option<StateId> = None;
                for &m in members {
                    if let Some(t) = rm.delta(m, e) {
                        match first {
                            None => first = Some(t),
                            Some(f) => {
                                if uf.union(f, t) {
                                    changed = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        if !changed {
            return Ok(Partition::from_union_find(uf));
        }
    }
}

/// A team machine projected onto a local alphabet: the quotient machine plus
/// the partition that produced it.
#[derive(Debug, Clone)]
pub struct ProjectedRm {
    machine: RewardMachine,
    partition: Partition,
    /// Partition block behind each machine state (unreachable blocks are
    /// dropped from the machine, so this is not the identity in general).
    block_ids: Vec<usize>,
    team_state_names: Vec<String>,
}

impl ProjectedRm {
    pub fn machine(&self) -> &RewardMachine {
        &self.machine
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// The machine state representing `team_state`, if its block is reachable.
    pub fn state_for(&self, team_state: StateId) -> Option<StateId> {
        let b = self.partition.block_of(team_state);
        self.block_ids.iter().position(|&k| k == b)
    }

    /// Human-readable back-map lines, one per machine state.
    pub fn back_map(&self) -> Vec<String> {
        self.block_ids
            .iter()
            .enumerate()
            .map(|(s, &b)| {
                let names: Vec<&str> = self
                    .partition
                    .members(b)
                    .iter()
                    .map(|&u| self.team_state_names[u].as_str())
                    .collect();
                format!("{} := {{{}}}", self.machine.state_name(s), names.join(", "))
            })
            .collect()
    }
}

/// Projects `rm` onto `local` (quotient construction).
///
/// The congruence underlying the partition guarantees that all defined member
/// transitions of a block on a local event land in a single target block;
/// violating that here means the fixpoint is buggy, so it is reported as an
/// internal error rather than silently picking a representative.
///
/// Blocks unreachable from the initial block are dropped: nothing downstream
/// (training, composition, bisimulation) can observe them, and pruning keeps
/// printed machines stable and small.
pub fn project(rm: &RewardMachine, local: &EventAlphabet) -> Result<ProjectedRm> {
    let partition = compute_equivalence(rm, local)?;
    let nb = partition.num_blocks();

    let block_names: Vec<String> = partition
        .blocks()
        .iter()
        .map(|members| {
            members.iter().map(|&u| rm.state_name(u)).collect::<Vec<_>>().join("+")
        })
        .collect();

    // Full quotient transition table, with the congruence sanity check.
    let mut delta: Vec<Vec<Option<usize>>> = vec![vec![None; local.len()]; nb];
    for b in 0..nb {
        for (ei, e) in local.iter().enumerate() {
            let mut target: Option<usize> = None;
            for &m in partition.members(b) {
                if let Some(t) = rm.delta(m, e) {
                    let tb = partition.block_of(t);
                    match target {
                        None => target = Some(tb),
                        Some(prev) if prev != tb => {
                            return Err(Error::internal(format!(
                                "projection congruence broken: block {} on '{e}' targets \
                                 blocks {} and {}",
                                block_names[b], block_names[prev], block_names[tb]
                            )));
                        }
                        _ => {}
                    }
                }
            }
            delta[b][ei] = target;
        }
    }

    // Restrict to blocks reachable from the initial one, in block order.
    let init_b = partition.block_of(rm.initial());
    let mut seen = vec![false; nb];
    seen[init_b] = true;
    let mut stack = vec![init_b];
    while let Some(b) = stack.pop() {
        for t in delta[b].iter().flatten() {
            if !seen[*t] {
                seen[*t] = true;
                stack.push(*t);
            }
        }
    }
    let block_ids: Vec<usize> = (0..nb).filter(|&b| seen[b]).collect();
    let mut new_id = vec![usize::MAX; nb];
    for (s, &b) in block_ids.iter().enumerate() {
        new_id[b] = s;
    }

    let state_names: Vec<String> = block_ids.iter().map(|&b| block_names[b].clone()).collect();
    let terminal_states: Vec<StateId> = block_ids
        .iter()
        .enumerate()
        .filter(|(_, &b)| partition.members(b).iter().any(|&u| rm.is_terminal(u)))
        .map(|(s, _)| s)
        .collect();
    let mut transitions: Vec<(StateId, Event, StateId)> = Vec::new();
    for (s, &b) in block_ids.iter().enumerate() {
        for (ei, e) in local.iter().enumerate() {
            if let Some(t) = delta[b][ei] {
                transitions.push((s, e.clone(), new_id[t]));
            }
        }
    }

    let machine = RewardMachine::new(
        local.clone(),
        state_names,
        new_id[init_b],
        &terminal_states,
        &transitions,
    )?;
    Ok(ProjectedRm {
        machine,
        partition,
        block_ids,
        team_state_names: (0..rm.num_states()).map(|u| rm.state_name(u).to_string()).collect(),
    })
}

/// Restricts an event sequence to the events a local alphabet can observe.
pub fn project_sequence(seq: &[Event], local: &EventAlphabet) -> Vec<Event> {
    seq.iter().filter(|e| local.contains(e)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::parse_rm;

    const GENERATOR_RM: &str = "\
alphabet: P D G
states: u0 u1 u2 u3 u4 u5
initial: u0
terminal: u5
u0 -P-> u1
u0 -D-> u2
u1 -D-> u3
u2 -P-> u3
u2 -G-> u4
u3 -G-> u5
";

    fn generator() -> RewardMachine {
        parse_rm(GENERATOR_RM).unwrap()
    }

    fn alpha(names: &[&str]) -> EventAlphabet {
        EventAlphabet::from_names(names).unwrap()
    }

    fn seq(s: &str) -> Vec<Event> {
        s.split_whitespace().map(Event::new).collect()
    }

    /// Brute-force oracle: boolean relation matrix, closed under symmetry,
    /// transitivity, the non-local seed rule, and the congruence rule.
    fn naive_closure(rm: &RewardMachine, local: &EventAlphabet) -> Vec<Vec<bool>> {
        let n = rm.num_states();
        let mut rel = vec![vec![false; n]; n];
        for (u, row) in rel.iter_mut().enumerate() {
            row[u] = true;
        }
        for u in 0..n {
            for e in rm.alphabet().iter() {
                if !local.contains(e) {
                    if let Some(v) = rm.delta(u, e) {
                        rel[u][v] = true;
                        rel[v][u] = true;
                    }
                }
            }
        }
        loop {
            let mut changed = false;
            // transitive + symmetric closure
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if rel[i][k] && rel[k][j] && !rel[i][j] {
                            rel[i][j] = true;
                            rel[j][i] = true;
                            changed = true;
                        }
                    }
                }
            }
            // congruence
            for u1 in 0..n {
                for u1p in 0..n {
                    if !rel[u1][u1p] {
                        continue;
                    }
                    for e in local.iter() {
                        if let (Some(a), Some(b)) = (rm.delta(u1, e), rm.delta(u1p, e)) {
                            if !rel[a][b] {
                                rel[a][b] = true;
                                rel[b][a] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return rel;
            }
        }
    }

    fn assert_matches_oracle(rm: &RewardMachine, local: &EventAlphabet) {
        let part = compute_equivalence(rm, local).unwrap();
        let rel = naive_closure(rm, local);
        for a in 0..rm.num_states() {
            for b in 0..rm.num_states() {
                assert_eq!(
                    part.same_block(a, b),
                    rel[a][b],
                    "disagree on ({a},{b}) for local {:?}",
                    local.events()
                );
            }
        }
    }

    #[test]
    fn generator_agent1_blocks() {
        let rm = generator();
        let part = compute_equivalence(&rm, &alpha(&["P", "D"])).unwrap();
        // G-transitions collapse u2/u4 and u3/u5.
        let names: Vec<Vec<&str>> = part
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&u| rm.state_name(u)).collect())
            .collect();
        assert_eq!(names, vec![vec!["u0"], vec!["u1"], vec!["u2", "u4"], vec!["u3", "u5"]]);
    }

    #[test]
    fn generator_agent2_blocks() {
        let rm = generator();
        let part = compute_equivalence(&rm, &alpha(&["D", "G"])).unwrap();
        // P-transitions collapse u0/u1 and u2/u3; congruence then forces
        // u4 ~ u5 because u2 ~ u3 and both step on G.
        let names: Vec<Vec<&str>> = part
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&u| rm.state_name(u)).collect())
            .collect();
        assert_eq!(names, vec![vec!["u0", "u1"], vec!["u2", "u3"], vec!["u4", "u5"]]);
    }

    #[test]
    fn full_local_alphabet_is_discrete() {
        let rm = generator();
        let part = compute_equivalence(&rm, &alpha(&["P", "D", "G"])).unwrap();
        assert_eq!(part.num_blocks(), rm.num_states());
    }

    #[test]
    fn empty_local_alphabet_collapses_connected_machine() {
        let rm = generator();
        let part = compute_equivalence(&rm, &alpha(&[])).unwrap();
        assert_eq!(part.num_blocks(), 1);
    }

    #[test]
    fn fixpoint_matches_naive_closure_on_case_study() {
        let rm = generator();
        for local in [&["P", "D"][..], &["D", "G"], &["P"], &["G"], &[], &["P", "D", "G"]] {
            assert_matches_oracle(&rm, &alpha(local));
        }
    }

    #[test]
    fn projected_generator_agent1_accepts_any_interleaving() {
        let rm = generator();
        let proj = project(&rm, &alpha(&["P", "D"])).unwrap();
        let m = proj.machine();
        assert_eq!(m.num_states(), 4);
        assert!(m.accepts(&seq("P D")).unwrap());
        assert!(m.accepts(&seq("D P")).unwrap());
        assert!(!m.accepts(&seq("P")).unwrap());
        assert!(!m.accepts(&seq("D")).unwrap());
    }

    #[test]
    fn projected_generator_agent2_is_door_then_generator() {
        let rm = generator();
        let proj = project(&rm, &alpha(&["D", "G"])).unwrap();
        let m = proj.machine();
        assert_eq!(m.num_states(), 3);
        assert!(m.accepts(&seq("D G")).unwrap());
        assert!(!m.accepts(&seq("G D")).unwrap());
        assert!(!m.accepts(&seq("D")).unwrap());
        // G before D is locally undefined: it is ignored, not fatal.
        assert!(m.accepts(&seq("G D G")).unwrap());
    }

    #[test]
    fn back_map_names_team_states() {
        let rm = generator();
        let proj = project(&rm, &alpha(&["D", "G"])).unwrap();
        let map = proj.back_map();
        assert!(map.iter().any(|l| l.contains("{u0, u1}")), "{map:?}");
    }

    #[test]
    fn local_event_outside_alphabet_rejected() {
        let rm = generator();
        assert!(project(&rm, &alpha(&["P", "Z"])).is_err());
    }

    #[test]
    fn unreachable_blocks_pruned() {
        let rm = parse_rm(
            "alphabet: A\nstates: s t x\ninitial: s\nterminal: t\ns -A-> t\n",
        )
        .unwrap();
        // With the full alphabet local, the partition is discrete, so the
        // isolated state x survives as its own block — but not as a state.
        let proj = project(&rm, &alpha(&["A"])).unwrap();
        assert_eq!(proj.partition().num_blocks(), 3);
        assert_eq!(proj.machine().num_states(), 2);
        assert!(proj.state_for(rm.state_id("x").unwrap()).is_none());
        assert_eq!(proj.state_for(rm.state_id("t").unwrap()), Some(1));
    }

    #[test]
    fn project_sequence_filters() {
        let local = alpha(&["P", "D"]);
        let filtered = project_sequence(&seq("D G P G"), &local);
        assert_eq!(filtered, seq("D P"));
        assert!(project_sequence(&[], &local).is_empty());
        assert!(project_sequence(&seq("G G"), &local).is_empty());
    }
}
