//! Augmented task machines: the product of a (projected) reward machine with
//! a causal DFA, with rewards adjusted so that entering the DFA's rejecting
//! sink pays -1.
//!
//! The sink is only reachable through event sequences the causal knowledge
//! rules out, so the optimal value of every pair whose continuations all pass
//! through the sink drops to 0 — and a value of 0 is exactly the signal that
//! an exploration episode can stop early ([`should_short_circuit`]).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::rm::{RewardMachine, StateId};
use crate::tlcd::CausalDfa;

/// Product machine over pairs (machine state, causal-DFA state).
///
/// A pair transition is defined exactly when the machine's is (the DFA side
/// is total and advances alongside); its reward is -1 when the DFA lands in
/// the rejecting sink and the machine's task-completion reward otherwise.
/// A pair is terminal when the machine state is.
#[derive(Debug, Clone)]
pub struct TildeRm {
    alphabet: EventAlphabet,
    pairs: Vec<(StateId, StateId)>,
    index: HashMap<(StateId, StateId), usize>,
    names: Vec<String>,
    delta: Vec<Vec<Option<usize>>>,
    reward: Vec<Vec<i8>>,
    terminal: Vec<bool>,
    sink: Vec<bool>,
}

/// Optimal undiscounted values V* per reachable pair.
#[derive(Debug, Clone)]
pub struct ValueTable {
    index: HashMap<(StateId, StateId), usize>,
    values: Vec<f64>,
}

/// Builds the reachable augmented machine for `local` under `causal`.
pub fn build_tilde(local: &RewardMachine, causal: &CausalDfa) -> Result<TildeRm> {
    let dfa = causal.dfa();
    if !dfa.alphabet().is_superset_of(local.alphabet()) {
        return Err(Error::invalid(
            "causal DFA alphabet must contain every machine event",
        ));
    }
    let alphabet = local.alphabet().clone();
    let sink_state = causal.rejecting_sink();

    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut index: HashMap<(StateId, StateId), usize> = HashMap::new();
    let mut delta: Vec<Vec<Option<usize>>> = Vec::new();
    let mut reward: Vec<Vec<i8>> = Vec::new();

    let start = (local.initial(), dfa.initial());
    index.insert(start, 0);
    pairs.push(start);
    let mut head = 0;
    while head < pairs.len() {
        let (u, q) = pairs[head];
        let mut drow = Vec::with_capacity(alphabet.len());
        let mut rrow = Vec::with_capacity(alphabet.len());
        for e in alphabet.iter() {
            match local.delta(u, e) {
                None => {
                    drow.push(None);
                    rrow.push(0);
                }
                Some(u2) => {
                    let q2 = dfa.step(q, e)?;
                    let next = (u2, q2);
                    let id = *index.entry(next).or_insert_with(|| {
                        pairs.push(next);
                        pairs.len() - 1
                    });
                    drow.push(Some(id));
                    rrow.push(if Some(q2) == sink_state {
                        -1
                    } else {
                        i8::from(local.is_terminal(u2) && !local.is_terminal(u))
                    });
                }
            }
        }
        delta.push(drow);
        reward.push(rrow);
        head += 1;
    }

    let names = pairs
        .iter()
        .map(|&(u, q)| format!("({},{})", local.state_name(u), dfa.state_name(q)))
        .collect();
    let terminal = pairs.iter().map(|&(u, _)| local.is_terminal(u)).collect();
    let sink = pairs.iter().map(|&(_, q)| Some(q) == sink_state).collect();
    Ok(TildeRm {
        alphabet,
        pairs,
        index,
        names,
        delta,
        reward,
        terminal,
        sink,
    })
}

impl TildeRm {
    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn initial(&self) -> usize {
        0
    }

    /// The (machine state, DFA state) behind a pair id.
    pub fn pair(&self, id: usize) -> (StateId, StateId) {
        self.pairs[id]
    }

    pub fn id_of(&self, u: StateId, q: StateId) -> Option<usize> {
        self.index.get(&(u, q)).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.terminal[id]
    }

    /// Whether the pair's DFA component is the rejecting sink.
    pub fn is_sink(&self, id: usize) -> bool {
        self.sink[id]
    }

    /// Follows the pair transition on `e`; `None` when the machine side has
    /// no transition (the pair holds and no reward is due).
    pub fn step(&self, id: usize, e: &Event) -> Result<Option<(usize, i8)>> {
        let ei = self
            .alphabet
            .index_of(e)
            .ok_or_else(|| Error::invalid(format!("event '{e}' is not in the alphabet")))?;
        Ok(self.delta[id][ei].map(|next| (next, self.reward[id][ei])))
    }

    pub fn defined_events(&self, id: usize) -> Vec<Event> {
        self.alphabet
            .iter()
            .enumerate()
            .filter(|(i, _)| self.delta[id][*i].is_some())
            .map(|(_, e)| e.clone())
            .collect()
    }

    /// Human-readable dump of the product with values attached.
    pub fn to_text(&self, vt: &ValueTable) -> String {
        let mut out = String::new();
        for id in 0..self.num_pairs() {
            let (u, q) = self.pairs[id];
            let mut tags = String::new();
            if self.terminal[id] {
                tags.push_str(" terminal");
            }
            if self.sink[id] {
                tags.push_str(" sink");
            }
            let v = vt.value(u, q).unwrap_or(f64::NAN);
            out.push_str(&format!("state {} V*={v}{tags}\n", self.names[id]));
            for (ei, e) in self.alphabet.iter().enumerate() {
                if let Some(next) = self.delta[id][ei] {
                    out.push_str(&format!(
                        "  -{e}-> {} reward {}\n",
                        self.names[next], self.reward[id][ei]
                    ));
                }
            }
        }
        out
    }
}

/// Solves the undiscounted Bellman optimality recursion over pairs:
/// V*(p) = max(0, max over defined e of reward(p,e) + V*(next)), with
/// V* = 0 at terminal pairs. Iterating the backup from 0 is monotone and
/// bounded, so it converges to the least non-negative fixed point in at most
/// one sweep per pair.
pub fn value_iteration(t: &TildeRm) -> Result<ValueTable> {
    let n = t.num_pairs();
    let mut values = vec![0.0_f64; n];
    let mut converged = false;
    for _ in 0..=n {
        let mut next = vec![0.0_f64; n];
        for id in 0..n {
            if t.terminal[id] {
                continue;
            }
            let mut best = 0.0_f64;
            for ei in 0..t.alphabet.len() {
                if let Some(dst) = t.delta[id][ei] {
                    best = best.max(f64::from(t.reward[id][ei]) + values[dst]);
                }
            }
            next[id] = best;
        }
        if next == values {
            converged = true;
            break;
        }
        values = next;
    }
    if !converged {
        return Err(Error::internal(
            "value iteration did not converge; the product has a positive-reward cycle",
        ));
    }
    Ok(ValueTable {
        index: t.index.clone(),
        values,
    })
}

impl ValueTable {
    pub fn value(&self, u: StateId, q: StateId) -> Option<f64> {
        self.index.get(&(u, q)).map(|&id| self.values[id])
    }

    pub fn value_by_id(&self, id: usize) -> f64 {
        self.values[id]
    }
}

/// True exactly when V*(u,q) = 0: the pair is terminal or no attainable
/// continuation can still produce reward, so an exploring agent should reset.
pub fn should_short_circuit(vt: &ValueTable, u: StateId, q: StateId) -> Result<bool> {
    match vt.value(u, q) {
        Some(v) => Ok(v == 0.0),
        None => Err(Error::invalid(format!(
            "pair ({u},{q}) is not in the value table"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventAlphabet;
    use crate::projection::project;
    use crate::rm::parse_rm;
    use crate::tlcd::parse_tlcd;

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

    const GENERATOR_TLCD: &str = "alphabet: P D G\nD ~> G !X P\n";

    fn agent1_machine() -> RewardMachine {
        let team = parse_rm(GENERATOR_RM).unwrap();
        let alpha = EventAlphabet::from_names(&["P", "D"]).unwrap();
        project(&team, &alpha).unwrap().machine().clone()
    }

    fn agent1_causal() -> CausalDfa {
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        tlcd.compile(&EventAlphabet::from_names(&["P", "D"]).unwrap())
            .unwrap()
    }

    /// Oracle: V*(pair) is 1 exactly when a terminal pair is reachable
    /// without ever taking a sink-entering transition.
    fn oracle_values(t: &TildeRm) -> Vec<f64> {
        let n = t.num_pairs();
        let mut win = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for id in 0..n {
                if win[id] || t.is_terminal(id) {
                    continue;
                }
                for ei in 0..t.alphabet().len() {
                    if let Some(dst) = t.delta[id][ei] {
                        if t.reward[id][ei] >= 0 && (t.is_terminal(dst) || win[dst]) {
                            win[id] = true;
                            changed = true;
                            break;
                        }
                    }
                }
            }
        }
        (0..n)
            .map(|id| {
                if t.is_terminal(id) {
                    0.0
                } else {
                    f64::from(u8::from(win[id]))
                }
            })
            .collect()
    }

    #[test]
    fn agent1_product_values() {
        let local = agent1_machine();
        let tilde = build_tilde(&local, &agent1_causal()).unwrap();
        let vt = value_iteration(&tilde).unwrap();

        let initial = tilde.pair(tilde.initial());
        assert_eq!(vt.value(initial.0, initial.1), Some(1.0));
        assert!(!should_short_circuit(&vt, initial.0, initial.1).unwrap());

        // Follow D from the initial pair: the after-door block with the DFA
        // remembering the door. Its only continuation completes the task
        // through the sink, so its value collapses to 0.
        let after_d = tilde
            .step(tilde.initial(), &Event::new("D"))
            .unwrap()
            .expect("D defined initially");
        let (u, q) = tilde.pair(after_d.0);
        assert_eq!(vt.value(u, q), Some(0.0));
        assert!(should_short_circuit(&vt, u, q).unwrap());
        assert!(!tilde.is_terminal(after_d.0));

        // Completing from there pays the sink penalty.
        let (done, r) = tilde.step(after_d.0, &Event::new("P")).unwrap().unwrap();
        assert_eq!(r, -1);
        assert!(tilde.is_terminal(done));
        assert!(tilde.is_sink(done));
        let (ud, qd) = tilde.pair(done);
        assert_eq!(vt.value(ud, qd), Some(0.0));
    }

    #[test]
    fn degenerate_dfa_keeps_all_values_positive() {
        let local = agent1_machine();
        let trivial = CausalDfa::trivial(local.alphabet().clone());
        let tilde = build_tilde(&local, &trivial).unwrap();
        assert_eq!(tilde.num_pairs(), local.num_states());
        let vt = value_iteration(&tilde).unwrap();
        for id in 0..tilde.num_pairs() {
            let (u, q) = tilde.pair(id);
            let expected = if tilde.is_terminal(id) { 0.0 } else { 1.0 };
            assert_eq!(vt.value(u, q), Some(expected), "pair {}", tilde.name(id));
        }
    }

    #[test]
    fn constraining_never_raises_values() {
        let local = agent1_machine();
        let free = build_tilde(&local, &CausalDfa::trivial(local.alphabet().clone())).unwrap();
        let constrained = build_tilde(&local, &agent1_causal()).unwrap();
        let vt_free = value_iteration(&free).unwrap();
        let vt_con = value_iteration(&constrained).unwrap();
        for id in 0..constrained.num_pairs() {
            let (u, _) = constrained.pair(id);
            let free_value = vt_free.value(u, 0).unwrap();
            assert!(
                vt_con.value_by_id(id) <= free_value,
                "value rose at {}",
                constrained.name(id)
            );
        }
    }

    #[test]
    fn team_product_short_circuits_after_door_first() {
        let team = parse_rm(GENERATOR_RM).unwrap();
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        let causal = tlcd.compile(team.alphabet()).unwrap();
        let tilde = build_tilde(&team, &causal).unwrap();
        let vt = value_iteration(&tilde).unwrap();

        let initial = tilde.initial();
        assert_eq!(vt.value_by_id(initial), 1.0);
        let (after_d, _) = tilde.step(initial, &Event::new("D")).unwrap().unwrap();
        assert_eq!(vt.value_by_id(after_d), 0.0, "door-first team pair");
        let (after_p, _) = tilde.step(initial, &Event::new("P")).unwrap().unwrap();
        assert_eq!(vt.value_by_id(after_p), 1.0, "pipe-first team pair");
    }

    #[test]
    fn value_iteration_matches_path_search_oracle() {
        let team = parse_rm(GENERATOR_RM).unwrap();
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        let locals = [
            EventAlphabet::from_names(&["P", "D"]).unwrap(),
            EventAlphabet::from_names(&["D", "G"]).unwrap(),
        ];
        let mut products = Vec::new();
        for alpha in &locals {
            let machine = project(&team, alpha).unwrap().machine().clone();
            products.push(build_tilde(&machine, &CausalDfa::trivial(alpha.clone())).unwrap());
        }
        products.push(build_tilde(&team, &tlcd.compile(team.alphabet()).unwrap()).unwrap());
        let local1 = project(&team, &locals[0]).unwrap().machine().clone();
        products.push(build_tilde(&local1, &agent1_causal()).unwrap());

        for tilde in &products {
            let vt = value_iteration(tilde).unwrap();
            let oracle = oracle_values(tilde);
            for id in 0..tilde.num_pairs() {
                assert_eq!(
                    vt.value_by_id(id),
                    oracle[id],
                    "oracle mismatch at {}",
                    tilde.name(id)
                );
            }
        }
    }

    #[test]
    fn sink_penalty_never_changes_a_reachable_argmax() {
        // Replacing the adjusted reward with the plain task reward in the
        // Bellman right-hand side leaves every maximizing event set intact
        // on the product (sink entry only competes where it is the sole
        // continuation).
        let local = agent1_machine();
        let tilde = build_tilde(&local, &agent1_causal()).unwrap();
        let vt = value_iteration(&tilde).unwrap();
        for id in 0..tilde.num_pairs() {
            if tilde.is_sink(id) || tilde.is_terminal(id) {
                continue;
            }
            let rhs = |use_adjusted: bool| -> Vec<usize> {
                let mut scored: Vec<(usize, f64)> = Vec::new();
                for ei in 0..tilde.alphabet().len() {
                    if let Some(dst) = tilde.delta[id][ei] {
                        let (u2, _) = tilde.pair(dst);
                        let plain = f64::from(i8::from(
                            local.is_terminal(u2) && !local.is_terminal(tilde.pair(id).0),
                        ));
                        let r = if use_adjusted {
                            f64::from(tilde.reward[id][ei])
                        } else {
                            plain
                        };
                        scored.push((ei, r + vt.value_by_id(dst)));
                    }
                }
                let best = scored.iter().map(|&(_, v)| v).fold(f64::MIN, f64::max);
                scored
                    .into_iter()
                    .filter(|&(_, v)| v == best)
                    .map(|(ei, _)| ei)
                    .collect()
            };
            assert_eq!(rhs(true), rhs(false), "argmax changed at {}", tilde.name(id));
        }
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let team = parse_rm(GENERATOR_RM).unwrap();
        let small = CausalDfa::trivial(EventAlphabet::from_names(&["P", "D"]).unwrap());
        assert!(build_tilde(&team, &small).is_err());
    }

    #[test]
    fn unknown_pair_lookup_is_an_error() {
        let local = agent1_machine();
        let tilde = build_tilde(&local, &agent1_causal()).unwrap();
        let vt = value_iteration(&tilde).unwrap();
        assert!(should_short_circuit(&vt, 99, 0).is_err());
    }
}
