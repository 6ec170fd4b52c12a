//! Temporal-logic causal diagrams: directed graphs whose edges `lhs ~> rhs`
//! assert the invariant G(lhs -> rhs) over every attainable event sequence.
//!
//! A diagram compiles to a minimized DFA over a chosen event alphabet via
//! formula progression: states are simplified residual obligations, the
//! transition on event `e` is progression through `e`, and a state accepts
//! when its obligation holds of the empty remainder. Because each input
//! position carries exactly one event, the exactly-one-event side condition
//! is realized by the alphabet itself rather than compiled into the formula.

use std::collections::HashMap;

use crate::dfa::Dfa;
use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::ltlf::{eval, eval_empty, parse_formula, progress, simplify, Formula};
use crate::rm::StateId;

/// Hard cap on progression states; the formulas used in practice compile to
/// a handful, so hitting this signals a pathological input.
const MAX_FORMULA_STATES: usize = 10_000;

/// One causal edge: whenever `lhs` holds at a position, `rhs` must hold there
/// too (under an implicit G).
#[derive(Debug, Clone)]
pub struct TlcdEdge {
    pub lhs: Formula,
    pub rhs: Formula,
}

/// A parsed causal diagram: a declared alphabet and at least one edge.
#[derive(Debug, Clone)]
pub struct Tlcd {
    alphabet: EventAlphabet,
    edges: Vec<TlcdEdge>,
}

/// A compiled causal DFA: minimized, with its rejecting sink identified when
/// one exists. Minimization guarantees there is at most one such sink and
/// that every other state can still reach an accepting state.
#[derive(Debug, Clone)]
pub struct CausalDfa {
    dfa: Dfa,
    rejecting_sink: Option<StateId>,
}

impl Tlcd {
    pub fn new(alphabet: EventAlphabet, edges: Vec<TlcdEdge>) -> Result<Tlcd> {
        if edges.is_empty() {
            return Err(Error::invalid("a causal diagram needs at least one edge"));
        }
        for edge in &edges {
            for side in [&edge.lhs, &edge.rhs] {
                for atom in side.atoms() {
                    if !alphabet.contains(&atom) {
                        return Err(Error::invalid(format!(
                            "atom '{atom}' is not in the declared alphabet"
                        )));
                    }
                }
            }
        }
        Ok(Tlcd { alphabet, edges })
    }

    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    pub fn edges(&self) -> &[TlcdEdge] {
        &self.edges
    }

    /// The conjunction of G(lhs -> rhs) over all edges, in edge order.
    pub fn formula(&self) -> Formula {
        Formula::and(
            self.edges
                .iter()
                .map(|e| Formula::always(Formula::implies(e.lhs.clone(), e.rhs.clone())))
                .collect(),
        )
    }

    /// Compiles the diagram to a causal DFA over `alphabet`.
    pub fn compile(&self, alphabet: &EventAlphabet) -> Result<CausalDfa> {
        compile(&self.formula(), alphabet)
    }
}

impl CausalDfa {
    /// The no-knowledge diagram: accepts everything, never short-circuits.
    pub fn trivial(alphabet: EventAlphabet) -> CausalDfa {
        CausalDfa {
            dfa: Dfa::trivial_accepting(alphabet),
            rejecting_sink: None,
        }
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn rejecting_sink(&self) -> Option<StateId> {
        self.rejecting_sink
    }
}

/// Evaluates a formula on a finite event sequence (from its first position).
pub fn ltlf_eval(f: &Formula, seq: &[Event]) -> bool {
    eval(f, seq, 0)
}

/// The exactly-one-event-per-position formula G(⋁_e (e ∧ ⋀_{e'≠e} ¬e')).
///
/// Event sequences satisfy it by construction; it exists so the equivalence
/// between "alphabet as input letters" and the explicit side condition can be
/// stated and tested.
pub fn one_event_constraint(alphabet: &EventAlphabet) -> Result<Formula> {
    if alphabet.is_empty() {
        return Err(Error::invalid(
            "exactly-one-event constraint needs a non-empty alphabet",
        ));
    }
    let disjuncts = alphabet
        .iter()
        .map(|e| {
            let mut conj = vec![Formula::Atom(e.clone())];
            conj.extend(
                alphabet
                    .iter()
                    .filter(|o| *o != e)
                    .map(|o| Formula::not(Formula::Atom(o.clone()))),
            );
            Formula::and(conj)
        })
        .collect();
    Ok(Formula::always(Formula::or(disjuncts)))
}

/// Compiles `f` to a minimized DFA over `alphabet` by formula progression.
pub fn compile(f: &Formula, alphabet: &EventAlphabet) -> Result<CausalDfa> {
    for atom in f.atoms() {
        if !alphabet.contains(&atom) {
            return Err(Error::invalid(format!(
                "formula atom '{atom}' is not in the DFA alphabet"
            )));
        }
    }

    let start = simplify(f);
    let mut index: HashMap<Formula, StateId> = HashMap::new();
    let mut states: Vec<Formula> = Vec::new();
    let mut delta: Vec<Vec<StateId>> = Vec::new();
    index.insert(start.clone(), 0);
    states.push(start);

    let mut head = 0;
    while head < states.len() {
        let mut row = Vec::with_capacity(alphabet.len());
        for e in alphabet.iter() {
            let next = simplify(&progress(&states[head], e));
            let id = match index.get(&next) {
                Some(&id) => id,
                None => {
                    if states.len() >= MAX_FORMULA_STATES {
                        return Err(Error::invalid(format!(
                            "formula compilation exceeded {MAX_FORMULA_STATES} states"
                        )));
                    }
                    let id = states.len();
                    index.insert(next.clone(), id);
                    states.push(next);
                    id
                }
            };
            row.push(id);
        }
        delta.push(row);
        head += 1;
    }

    let accepting: Vec<bool> = states.iter().map(eval_empty).collect();
    let names: Vec<String> = states.iter().map(|s| s.to_string()).collect();
    let dfa = Dfa::new(alphabet.clone(), names, 0, accepting, delta)?.minimize();
    let dfa = rename_states(&dfa)?;
    let rejecting_sink = find_rejecting_sink(&dfa)?;
    check_normalized(&dfa, rejecting_sink)?;
    Ok(CausalDfa {
        dfa,
        rejecting_sink,
    })
}

/// Rebuilds a DFA with compact state names q0, q1, ... (progression-derived
/// names are formulas and unwieldy after minimization merges them).
fn rename_states(d: &Dfa) -> Result<Dfa> {
    let names = (0..d.num_states()).map(|i| format!("q{i}")).collect();
    let accepting = (0..d.num_states()).map(|i| d.is_accepting(i)).collect();
    let delta = (0..d.num_states())
        .map(|i| (0..d.alphabet().len()).map(|j| d.step_idx(i, j)).collect())
        .collect();
    Dfa::new(d.alphabet().clone(), names, d.initial(), accepting, delta)
}

/// Finds the unique non-accepting all-self-loop state of a minimized DFA,
/// if there is one.
pub fn find_rejecting_sink(d: &Dfa) -> Result<Option<StateId>> {
    let mut sinks = (0..d.num_states()).filter(|&q| {
        !d.is_accepting(q) && (0..d.alphabet().len()).all(|j| d.step_idx(q, j) == q)
    });
    let first = sinks.next();
    if sinks.next().is_some() {
        return Err(Error::internal(
            "minimized DFA has more than one rejecting sink",
        ));
    }
    Ok(first)
}

/// Verifies that every non-sink state can still reach an accepting state.
/// Minimization merges all states with empty residual language into a single
/// absorbing rejecting state, so a violation means minimization is broken.
fn check_normalized(d: &Dfa, sink: Option<StateId>) -> Result<()> {
    for q in 0..d.num_states() {
        if Some(q) == sink {
            continue;
        }
        let mut seen = vec![false; d.num_states()];
        let mut stack = vec![q];
        seen[q] = true;
        let mut ok = false;
        while let Some(cur) = stack.pop() {
            if d.is_accepting(cur) {
                ok = true;
                break;
            }
            for j in 0..d.alphabet().len() {
                let next = d.step_idx(cur, j);
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        if !ok {
            return Err(Error::internal(
                "minimized DFA has a dead state that is not the rejecting sink",
            ));
        }
    }
    Ok(())
}

/// Parses a `.tlcd` file: an `alphabet:` header followed by one `lhs ~> rhs`
/// line per edge. `#` starts a comment; blank lines are ignored.
pub fn parse_tlcd(text: &str) -> Result<Tlcd> {
    let mut alphabet: Option<EventAlphabet> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("alphabet:") {
            if alphabet.is_some() {
                return Err(Error::parse(lineno, "duplicate alphabet header"));
            }
            let names: Vec<&str> = rest.split_whitespace().collect();
            alphabet = Some(
                EventAlphabet::from_names(&names)
                    .map_err(|e| Error::parse(lineno, format!("bad alphabet: {e}")))?,
            );
            continue;
        }
        let Some(alpha) = alphabet.as_ref() else {
            return Err(Error::parse(
                lineno,
                "expected 'alphabet:' header before edges",
            ));
        };
        let parts: Vec<&str> = line.split("~>").collect();
        if parts.len() != 2 {
            return Err(Error::parse(
                lineno,
                "expected exactly one '~>' per edge line",
            ));
        }
        let lhs = parse_formula(parts[0])
            .map_err(|e| Error::parse(lineno, format!("bad edge source: {e}")))?;
        let rhs = parse_formula(parts[1])
            .map_err(|e| Error::parse(lineno, format!("bad edge target: {e}")))?;
        for side in [&lhs, &rhs] {
            for atom in side.atoms() {
                if !alpha.contains(&atom) {
                    return Err(Error::parse(
                        lineno,
                        format!("atom '{atom}' is not in the declared alphabet"),
                    ));
                }
            }
        }
        edges.push(TlcdEdge { lhs, rhs });
    }
    let alphabet = alphabet.ok_or_else(|| Error::invalid("missing 'alphabet:' header"))?;
    Tlcd::new(alphabet, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GENERATOR_TLCD: &str = "\
# pipe can never be fixed after the door opened
alphabet: P D G
D ~> G !X P
";

    fn alpha(names: &[&str]) -> EventAlphabet {
        EventAlphabet::from_names(names).unwrap()
    }

    fn seq(s: &str) -> Vec<Event> {
        s.split_whitespace().map(Event::new).collect()
    }

    fn all_seqs(alphabet: &EventAlphabet, max_len: usize) -> Vec<Vec<Event>> {
        let mut out = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for t in &frontier {
                for e in alphabet.iter() {
                    let mut t2 = t.clone();
                    t2.push(e.clone());
                    next.push(t2);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn parses_single_edge_diagram() {
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        assert_eq!(tlcd.edges().len(), 1);
        assert_eq!(tlcd.formula().to_string(), "G (D -> G !X P)");
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_tlcd("alphabet: P D\n").is_err()); // no edges
        assert!(parse_tlcd("D ~> G !X P\n").is_err()); // no header
        let err = parse_tlcd("alphabet: P D\nD ~> G !X Q\n").unwrap_err();
        assert!(err.to_string().contains("Q"), "got: {err}");
        assert!(parse_tlcd("alphabet: P D\nD ~> P ~> D\n").is_err());
        assert!(parse_tlcd("alphabet: P P\nP ~> P\n").is_err()); // dup event
    }

    #[test]
    fn two_edges_conjoin_in_order() {
        let tlcd = parse_tlcd("alphabet: F R\nF ~> G !R\nR ~> G !F\n").unwrap();
        assert_eq!(tlcd.formula().to_string(), "G (F -> G !R) & G (R -> G !F)");
    }

    #[test]
    fn exactly_one_event_formula() {
        let single = one_event_constraint(&alpha(&["P"])).unwrap();
        assert_eq!(single.to_string(), "G P");
        let pair = one_event_constraint(&alpha(&["P", "D"])).unwrap();
        assert_eq!(pair.to_string(), "G (P & !D | D & !P)");
        assert!(ltlf_eval(&pair, &seq("P D P")));
        assert!(one_event_constraint(&alpha(&[])).is_err());
    }

    #[test]
    fn compiled_generator_diagram_is_three_states_with_sink() {
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        let causal = tlcd.compile(&alpha(&["P", "D", "G"])).unwrap();
        assert_eq!(causal.dfa().num_states(), 3);
        let sink = causal.rejecting_sink().expect("sink expected");
        assert!(!causal.dfa().is_accepting(sink));
        // Sanity on the shape: initial accepts, D leads to a different
        // accepting state, P from there lands in the sink.
        let d = causal.dfa();
        assert!(d.is_accepting(d.initial()));
        let after_d = d.step(d.initial(), &Event::new("D")).unwrap();
        assert_ne!(after_d, d.initial());
        assert!(d.is_accepting(after_d));
        assert_eq!(d.step(after_d, &Event::new("P")).unwrap(), sink);
    }

    #[test]
    fn compiled_dfa_agrees_with_direct_evaluation() {
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        let alphabet = alpha(&["P", "D", "G"]);
        let causal = tlcd.compile(&alphabet).unwrap();
        let f = tlcd.formula();
        for s in all_seqs(&alphabet, 5) {
            assert_eq!(
                causal.dfa().accepts(&s).unwrap(),
                ltlf_eval(&f, &s),
                "mismatch on {s:?}"
            );
        }
    }

    #[test]
    fn compile_over_local_alphabet() {
        // The same diagram compiled over an agent's event set {P, D}; the
        // atoms still fall inside the smaller alphabet.
        let tlcd = parse_tlcd(GENERATOR_TLCD).unwrap();
        let causal = tlcd.compile(&alpha(&["P", "D"])).unwrap();
        assert_eq!(causal.dfa().num_states(), 3);
        assert!(causal.rejecting_sink().is_some());
        assert!(causal.dfa().accepts(&seq("P D")).unwrap());
        assert!(!causal.dfa().accepts(&seq("D P")).unwrap());
        assert!(causal.dfa().accepts(&seq("D D")).unwrap());
    }

    #[test]
    fn compile_requires_atoms_in_alphabet() {
        let f = parse_formula("G (D -> G !X P)").unwrap();
        let err = compile(&f, &alpha(&["D", "G"])).unwrap_err();
        assert!(err.to_string().contains("P"), "got: {err}");
    }

    #[test]
    fn tautology_compiles_to_single_accepting_state() {
        let causal = compile(&Formula::True, &alpha(&["P", "D"])).unwrap();
        assert_eq!(causal.dfa().num_states(), 1);
        assert!(causal.dfa().is_accepting(0));
        assert_eq!(causal.rejecting_sink(), None);
    }

    #[test]
    fn unsatisfiable_formula_is_all_sink() {
        let causal = compile(&Formula::False, &alpha(&["P"])).unwrap();
        assert_eq!(causal.dfa().num_states(), 1);
        assert_eq!(causal.rejecting_sink(), Some(0));
    }

    #[test]
    fn trivial_causal_dfa_has_no_sink() {
        let causal = CausalDfa::trivial(alpha(&["P", "D"]));
        assert_eq!(causal.rejecting_sink(), None);
        assert!(causal.dfa().accepts(&seq("P D P")).unwrap());
    }

    #[test]
    fn sink_detection_on_hand_built_dfa() {
        let d = crate::dfa::tests::no_p_after_d();
        assert_eq!(find_rejecting_sink(&d).unwrap(), Some(1));
        let trivial = Dfa::trivial_accepting(alpha(&["P"]));
        assert_eq!(find_rejecting_sink(&trivial).unwrap(), None);
    }

    #[test]
    fn random_formulas_compile_consistently() {
        // Oracle agreement on a corpus beyond the case studies.
        let alphabet = alpha(&["a", "b"]);
        for text in [
            "G (a -> G !X b)",
            "a U b",
            "a W b",
            "!a U b & G (b -> X a)",
            "X X a",
            "G (a | b)",
            "(a U b) | G a",
            "G (a -> X b)",
        ] {
            let f = parse_formula(text).unwrap();
            let causal = compile(&f, &alphabet).unwrap();
            for s in all_seqs(&alphabet, 6) {
                assert_eq!(
                    causal.dfa().accepts(&s).unwrap(),
                    ltlf_eval(&f, &s),
                    "mismatch for {text} on {s:?}"
                );
            }
        }
    }
}
