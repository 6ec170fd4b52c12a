//! Parallel composition of reward machines, products with causal DFAs, and
//! the strict/relaxed decomposition checks built on top of them.
//!
//! Equivalence of two machines is decided on their operational semantics:
//! undefined transitions stay put, so two machines are interchangeable exactly
//! when they accept the same event sequences. The checker explores the
//! synchronous product breadth-first; on success the reachable pair set is a
//! witness relation, on failure the discovered path is a shortest
//! distinguishing sequence, replay-verified before it is returned.

use std::collections::HashMap;
use std::collections::VecDeque;

use crate::dfa::Dfa;
use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::projection::project;
use crate::rm::{RewardMachine, StateId};

/// Outcome of a bisimilarity check.
#[derive(Debug, Clone)]
pub enum BisimResult {
    /// Equivalent; `relation` is the set of jointly reachable state pairs.
    Bisimilar { relation: Vec<(StateId, StateId)> },
    /// Not equivalent; `counterexample` is a shortest sequence the two
    /// machines disagree on.
    NotBisimilar { counterexample: Vec<Event> },
}

impl BisimResult {
    pub fn is_bisimilar(&self) -> bool {
        matches!(self, BisimResult::Bisimilar { .. })
    }

    pub fn counterexample(&self) -> Option<&[Event]> {
        match self {
            BisimResult::Bisimilar { .. } => None,
            BisimResult::NotBisimilar { counterexample } => Some(counterexample),
        }
    }
}

/// Parallel composition of two reward machines over the union alphabet.
///
/// On each event, every component with a defined transition advances and the
/// others hold their state; the composed transition is defined when at least
/// one component's is. Composite terminals are exactly the pairs of component
/// terminals, and only pairs reachable from the initial pair are kept.
pub fn parallel_compose(a: &RewardMachine, b: &RewardMachine) -> Result<RewardMachine> {
    let alphabet = a.alphabet().union(b.alphabet());
    let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut transitions: Vec<(StateId, Event, StateId)> = Vec::new();

    let start = (a.initial(), b.initial());
    index.insert(start, 0);
    pairs.push(start);
    let mut head = 0;
    while head < pairs.len() {
        let (ua, ub) = pairs[head];
        let src = head;
        head += 1;
        for e in alphabet.iter() {
            let da = if a.alphabet().contains(e) { a.delta(ua, e) } else { None };
            let db = if b.alphabet().contains(e) { b.delta(ub, e) } else { None };
            if da.is_none() && db.is_none() {
                continue;
            }
            let next = (da.unwrap_or(ua), db.unwrap_or(ub));
            let dst = *index.entry(next).or_insert_with(|| {
                pairs.push(next);
                pairs.len() - 1
            });
            transitions.push((src, e.clone(), dst));
        }
    }

    let state_names: Vec<String> = pairs
        .iter()
        .map(|&(ua, ub)| format!("({},{})", a.state_name(ua), b.state_name(ub)))
        .collect();
    let terminal: Vec<StateId> = pairs
        .iter()
        .enumerate()
        .filter(|(_, &(ua, ub))| a.is_terminal(ua) && b.is_terminal(ub))
        .map(|(i, _)| i)
        .collect();
    RewardMachine::new(alphabet, state_names, 0, &terminal, &transitions)
}

/// Folds [`parallel_compose`] over a non-empty list, left to right.
pub fn parallel_compose_all(machines: &[RewardMachine]) -> Result<RewardMachine> {
    let (first, rest) = machines
        .split_first()
        .ok_or_else(|| Error::invalid("parallel composition needs at least one machine"))?;
    let mut acc = first.clone();
    for m in rest {
        acc = parallel_compose(&acc, m)?;
    }
    Ok(acc)
}

/// Product of a reward machine with a causal DFA, over the machine's alphabet.
///
/// The DFA is total, so its component always advances; the machine component
/// follows its partial transition function and otherwise holds. A product
/// state is terminal when the machine side is terminal *and* the DFA side is
/// accepting, which makes the product accept exactly the sequences both
/// factors accept. Pairs stay tracked past terminal ones: a later DFA move
/// into a rejecting state must still be able to retract acceptance.
pub fn compose_rm_dfa(rm: &RewardMachine, dfa: &Dfa) -> Result<RewardMachine> {
    if !dfa.alphabet().is_superset_of(rm.alphabet()) {
        return Err(Error::invalid(
            "causal DFA alphabet must contain every machine event",
        ));
    }
    let alphabet = rm.alphabet().clone();
    let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut transitions: Vec<(StateId, Event, StateId)> = Vec::new();

    let start = (rm.initial(), dfa.initial());
    index.insert(start, 0);
    pairs.push(start);
    let mut head = 0;
    while head < pairs.len() {
        let (u, q) = pairs[head];
        let src = head;
        head += 1;
        for e in alphabet.iter() {
            let du = rm.delta(u, e);
            let q2 = dfa.step(q, e)?;
            if du.is_none() && q2 == q {
                continue; // neither side moves; staying is implicit
            }
            let next = (du.unwrap_or(u), q2);
            let dst = *index.entry(next).or_insert_with(|| {
                pairs.push(next);
                pairs.len() - 1
            });
            transitions.push((src, e.clone(), dst));
        }
    }

    let state_names: Vec<String> = pairs
        .iter()
        .map(|&(u, q)| format!("({},{})", rm.state_name(u), dfa.state_name(q)))
        .collect();
    let terminal: Vec<StateId> = pairs
        .iter()
        .enumerate()
        .filter(|(_, &(u, q))| rm.is_terminal(u) && dfa.is_accepting(q))
        .map(|(i, _)| i)
        .collect();
    RewardMachine::new(alphabet, state_names, 0, &terminal, &transitions)
}

/// Decides whether two machines over the same event set accept the same
/// sequences, returning a witness relation or a shortest counterexample.
pub fn bisimilar(a: &RewardMachine, b: &RewardMachine) -> Result<BisimResult> {
    if !a.alphabet().same_set(b.alphabet()) {
        return Err(Error::invalid("bisimilarity requires identical event sets"));
    }

    // BFS over the synchronous product of the stay-totalized machines. Parent
    // links reconstruct the path to the first pair that disagrees on
    // acceptance; BFS order makes that path shortest.
    let mut index: HashMap<(StateId, StateId), usize> = HashMap::new();
    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut parent: Vec<Option<(usize, Event)>> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    let visit = |pair: (StateId, StateId),
                     from: Option<(usize, Event)>,
                     index: &mut HashMap<(StateId, StateId), usize>,
                     pairs: &mut Vec<(StateId, StateId)>,
                     parent: &mut Vec<Option<(usize, Event)>>,
                     queue: &mut VecDeque<usize>|
     -> Option<usize> {
        if index.contains_key(&pair) {
            return None;
        }
        let id = pairs.len();
        index.insert(pair, id);
        pairs.push(pair);
        parent.push(from);
        queue.push_back(id);
        Some(id)
    };

    let start = (a.initial(), b.initial());
    let mut offender = None;
    let id = visit(start, None, &mut index, &mut pairs, &mut parent, &mut queue).unwrap();
    if a.is_terminal(start.0) != b.is_terminal(start.1) {
        offender = Some(id);
    }

    while offender.is_none() {
        let Some(cur) = queue.pop_front() else { break };
        let (ua, ub) = pairs[cur];
        for e in a.alphabet().iter() {
            let na = a.delta(ua, e).unwrap_or(ua);
            let nb = b.delta(ub, e).unwrap_or(ub);
            if let Some(id) = visit(
                (na, nb),
                Some((cur, e.clone())),
                &mut index,
                &mut pairs,
                &mut parent,
                &mut queue,
            ) {
                if a.is_terminal(na) != b.is_terminal(nb) {
                    offender = Some(id);
                    break;
                }
            }
        }
    }

    match offender {
        None => Ok(BisimResult::Bisimilar { relation: pairs }),
        Some(mut at) => {
            let mut counterexample = Vec::new();
            while let Some((prev, e)) = parent[at].clone() {
                counterexample.push(e);
                at = prev;
            }
            counterexample.reverse();
            let (ra, rb) = (a.accepts(&counterexample)?, b.accepts(&counterexample)?);
            if ra == rb {
                return Err(Error::internal(
                    "candidate distinguishing sequence failed replay verification",
                ));
            }
            Ok(BisimResult::NotBisimilar { counterexample })
        }
    }
}

/// The strict decomposition check: project the team machine along every local
/// event set, compose the projections, and compare against the original.
pub fn check_strict(team: &RewardMachine, locals: &[EventAlphabet]) -> Result<BisimResult> {
    let composed = composed_projections(team, locals)?;
    bisimilar(team, &composed)
}

/// The relaxed decomposition check: as [`check_strict`], but both sides are
/// first constrained by the causal DFA, so behavioral differences confined to
/// sequences the DFA rules out no longer count.
pub fn check_relaxed(
    team: &RewardMachine,
    locals: &[EventAlphabet],
    causal: &Dfa,
) -> Result<BisimResult> {
    if !causal.alphabet().is_superset_of(team.alphabet()) {
        return Err(Error::invalid(
            "causal DFA alphabet must contain every team event",
        ));
    }
    let composed = composed_projections(team, locals)?;
    let constrained_team = compose_rm_dfa(team, causal)?;
    let constrained_composition = compose_rm_dfa(&composed, causal)?;
    bisimilar(&constrained_team, &constrained_composition)
}

/// Projects `team` along each local event set and composes the results.
pub fn composed_projections(
    team: &RewardMachine,
    locals: &[EventAlphabet],
) -> Result<RewardMachine> {
    if locals.is_empty() {
        return Err(Error::invalid("at least one local event set is required"));
    }
    let mut union = locals[0].clone();
    for l in &locals[1..] {
        union = union.union(l);
    }
    if !union.same_set(team.alphabet()) {
        return Err(Error::invalid(
            "local event sets must jointly cover the team alphabet",
        ));
    }
    let machines: Vec<RewardMachine> = locals
        .iter()
        .map(|l| project(team, l).map(|p| p.machine().clone()))
        .collect::<Result<_>>()?;
    parallel_compose_all(&machines)
}
