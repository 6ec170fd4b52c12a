//! Reward machines over events, with a small text format.
//!
//! A reward machine is a deterministic automaton with a *partial* transition
//! function. On an event with no transition from the current state the machine
//! stays put and outputs reward 0. Rewards follow the task-completion
//! discipline: a transition is worth 1 exactly when it enters a terminal state
//! from a non-terminal one, and 0 otherwise, so the reward function is derived
//! from the terminal set rather than stored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet, LabelSet};

pub type StateId = usize;

#[derive(Debug, Clone)]
pub struct RewardMachine {
    alphabet: EventAlphabet,
    state_names: Vec<String>,
    initial: StateId,
    terminal: Vec<bool>,
    /// `delta[state][event index]`; `None` means undefined.
    delta: Vec<Vec<Option<StateId>>>,
}

impl RewardMachine {
    /// Builds and validates a machine from explicit parts.
    ///
    /// Rejects out-of-range ids and duplicate (state, event) transitions.
    /// Transitions out of terminal states are allowed here — projection
    /// quotients and products with DFAs produce them — but the *input format*
    /// is stricter: [`parse_rm`] insists that terminals are absorbing, which
    /// is what the task-completion reward discipline assumes.
    pub fn new(
        alphabet: EventAlphabet,
        state_names: Vec<String>,
        initial: StateId,
        terminal_states: &[StateId],
        transitions: &[(StateId, Event, StateId)],
    ) -> Result<Self> {
        let n = state_names.len();
        if n == 0 {
            return Err(Error::invalid("a reward machine needs at least one state"));
        }
        if initial >= n {
            return Err(Error::invalid("initial state out of range"));
        }
        let mut terminal = vec![false; n];
        for &t in terminal_states {
            if t >= n {
                return Err(Error::invalid("terminal state out of range"));
            }
            terminal[t] = true;
        }
        let mut delta = vec![vec![None; alphabet.len()]; n];
        for (src, e, dst) in transitions {
            let (src, dst) = (*src, *dst);
            if src >= n || dst >= n {
                return Err(Error::invalid("transition endpoint out of range"));
            }
            let ei = alphabet
                .index_of(e)
                .ok_or_else(|| Error::invalid(format!("transition on undeclared event '{e}'")))?;
            if delta[src][ei].is_some() {
                return Err(Error::invalid(format!(
                    "duplicate transition from '{}' on '{e}'",
                    state_names[src]
                )));
            }
            delta[src][ei] = Some(dst);
        }
        Ok(RewardMachine { alphabet, state_names, initial, terminal, delta })
    }

    /// True when no terminal state has an outgoing transition. Holds for every
    /// machine accepted by [`parse_rm`] and for the case-study tasks.
    pub fn terminals_absorbing(&self) -> bool {
        (0..self.num_states())
            .filter(|&u| self.terminal[u])
            .all(|u| self.delta[u].iter().all(Option::is_none))
    }

    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_name(&self, u: StateId) -> &str {
        &self.state_names[u]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn is_terminal(&self, u: StateId) -> bool {
        self.terminal[u]
    }

    pub fn terminal_states(&self) -> Vec<StateId> {
        (0..self.num_states()).filter(|&u| self.terminal[u]).collect()
    }

    /// The partial transition function.
    pub fn delta(&self, u: StateId, e: &Event) -> Option<StateId> {
        let ei = self.alphabet.index_of(e)?;
        self.delta[u][ei]
    }

    /// Events with a defined transition from `u`, in alphabet order.
    pub fn defined_events(&self, u: StateId) -> Vec<Event> {
        self.alphabet
            .iter()
            .enumerate()
            .filter(|(i, _)| self.delta[u][*i].is_some())
            .map(|(_, e)| e.clone())
            .collect()
    }

    /// Derived reward: 1 exactly on transitions entering the terminal set.
    pub fn reward(&self, from: StateId, to: StateId) -> f64 {
        if self.terminal[to] && !self.terminal[from] {
            1.0
        } else {
            0.0
        }
    }

    /// One step of the operational semantics: advance if a transition is
    /// defined, otherwise stay; reward per [`RewardMachine::reward`].
    ///
    /// Events outside the alphabet are a hard error, not a silent no-op.
    pub fn step(&self, u: StateId, e: &Event) -> Result<(StateId, f64)> {
        let ei = self
            .alphabet
            .index_of(e)
            .ok_or_else(|| Error::invalid(format!("event '{e}' is not in this machine's alphabet")))?;
        let next = self.delta[u][ei].unwrap_or(u);
        Ok((next, self.reward(u, next)))
    }

    /// Runs an event sequence from the initial state. Returns the accumulated
    /// reward (0 or 1 under the completion discipline) and the final state.
    pub fn run(&self, seq: &[Event]) -> Result<(f64, StateId)> {
        let mut u = self.initial;
        let mut total = 0.0;
        for e in seq {
            let (next, r) = self.step(u, e)?;
            u = next;
            total += r;
        }
        Ok((total, u))
    }

    /// True when the machine accepts the sequence, i.e. its run ends in a
    /// terminal state.
    pub fn accepts(&self, seq: &[Event]) -> Result<bool> {
        Ok(self.terminal[self.run(seq)?.1])
    }

    /// Reads a label set in canonical order, accumulating rewards.
    ///
    /// In debug builds every reading order is replayed and a
    /// [`Error::Consistency`] is raised if any order lands in a different
    /// state — simultaneous events must commute for the machine to be
    /// well-defined on set-valued labels.
    pub fn read_label_set(&self, u: StateId, labels: &LabelSet) -> Result<(StateId, f64)> {
        let canonical = self.read_in_order(u, labels.iter())?;
        #[cfg(debug_assertions)]
        {
            let events: Vec<&Event> = labels.iter().collect();
            let mut perm = events.clone();
            let mut orders = Vec::new();
            permutations(&mut perm, 0, &mut orders);
            for order in orders {
                let got = self.read_in_order(u, order.into_iter())?;
                if got.0 != canonical.0 {
                    return Err(Error::Consistency(format!(
                        "label set {labels} read from '{}' is order-dependent",
                        self.state_names[u]
                    )));
                }
            }
        }
        Ok(canonical)
    }

    fn read_in_order<'a>(
        &self,
        mut u: StateId,
        events: impl Iterator<Item = &'a Event>,
    ) -> Result<(StateId, f64)> {
        let mut total = 0.0;
        for e in events {
            let (next, r) = self.step(u, e)?;
            u = next;
            total += r;
        }
        Ok((u, total))
    }

    /// States reachable from the initial state through defined transitions.
    pub fn reachable_states(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = vec![self.initial];
        seen[self.initial] = true;
        while let Some(u) = queue.pop() {
            for d in self.delta[u].iter().flatten() {
                if !seen[*d] {
                    seen[*d] = true;
                    queue.push(*d);
                }
            }
        }
        (0..self.num_states()).filter(|&u| seen[u]).collect()
    }

    /// States from which no terminal state is reachable. An episode sitting in
    /// one of these can never produce reward again.
    pub fn dead_states(&self) -> Vec<StateId> {
        let n = self.num_states();
        let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for u in 0..n {
            for d in self.delta[u].iter().flatten() {
                rev[*d].push(u);
            }
        }
        let mut alive = self.terminal.clone();
        let mut queue: Vec<StateId> = (0..n).filter(|&u| alive[u]).collect();
        while let Some(u) = queue.pop() {
            for &p in &rev[u] {
                if !alive[p] {
                    alive[p] = true;
                    queue.push(p);
                }
            }
        }
        (0..n).filter(|&u| !alive[u]).collect()
    }

    /// Renders the machine in the text format accepted by [`parse_rm`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.alphabet.iter().map(Event::name).collect();
        writeln!(out, "alphabet: {}", names.join(" ")).unwrap();
        writeln!(out, "states: {}", self.state_names.join(" ")).unwrap();
        writeln!(out, "initial: {}", self.state_names[self.initial]).unwrap();
        let terms: Vec<&str> =
            self.terminal_states().iter().map(|&u| self.state_names[u].as_str()).collect();
        writeln!(out, "terminal: {}", terms.join(" ")).unwrap();
        for u in 0..self.num_states() {
            for (ei, d) in self.delta[u].iter().enumerate() {
                if let Some(d) = d {
                    writeln!(
                        out,
                        "{} -{}-> {}",
                        self.state_names[u],
                        self.alphabet.get(ei),
                        self.state_names[*d]
                    )
                    .unwrap();
                }
            }
        }
        out
    }
}

#[cfg(debug_assertions)]
fn permutations<'a>(items: &mut Vec<&'a Event>, k: usize, out: &mut Vec<Vec<&'a Event>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Parses the reward-machine text format:
///
/// ```text
/// # team task
/// alphabet: P D G
/// states: u1 u2 u3
/// initial: u1
/// terminal: u3
/// u1 -P-> u2
/// u2 -G-> u3
/// ```
///
/// `#` starts a comment; blank lines are ignored. The four header lines must
/// appear (in any order) before the transition lines that use them.
pub fn parse_rm(text: &str) -> Result<RewardMachine> {
    let mut alphabet: Option<(usize, EventAlphabet)> = None;
    let mut states: Option<Vec<String>> = None;
    let mut initial: Option<String> = None;
    let mut terminal: Option<Vec<String>> = None;
    let mut transitions: Vec<(usize, String, String, String)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("alphabet:") {
            if alphabet.is_some() {
                return Err(Error::parse(lineno, "duplicate 'alphabet:' line"));
            }
            let events: Vec<Event> = rest.split_whitespace().map(Event::new).collect();
            if events.is_empty() {
                return Err(Error::parse(lineno, "empty alphabet"));
            }
            let alpha = EventAlphabet::new(events)
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
            alphabet = Some((lineno, alpha));
        } else if let Some(rest) = line.strip_prefix("states:") {
            if states.is_some() {
                return Err(Error::parse(lineno, "duplicate 'states:' line"));
            }
            states = Some(rest.split_whitespace().map(str::to_string).collect());
        } else if let Some(rest) = line.strip_prefix("initial:") {
            if initial.is_some() {
                return Err(Error::parse(lineno, "duplicate 'initial:' line"));
            }
            let mut it = rest.split_whitespace();
            match (it.next(), it.next()) {
                (Some(s), None) => initial = Some(s.to_string()),
                _ => return Err(Error::parse(lineno, "'initial:' takes exactly one state")),
            }
        } else if let Some(rest) = line.strip_prefix("terminal:") {
            if terminal.is_some() {
                return Err(Error::parse(lineno, "duplicate 'terminal:' line"));
            }
            terminal = Some(rest.split_whitespace().map(str::to_string).collect());
        } else {
            let (src, ev, dst) = parse_transition_line(line)
                .ok_or_else(|| Error::parse(lineno, format!("unrecognized line '{line}'")))?;
            transitions.push((lineno, src, ev, dst));
        }
    }

    let (_, alphabet) =
        alphabet.ok_or_else(|| Error::parse(0, "missing 'alphabet:' line"))?;
    let state_names = states.ok_or_else(|| Error::parse(0, "missing 'states:' line"))?;
    if state_names.is_empty() {
        return Err(Error::parse(0, "'states:' lists no states"));
    }
    for (i, s) in state_names.iter().enumerate() {
        if state_names[..i].contains(s) {
            return Err(Error::parse(0, format!("duplicate state name '{s}'")));
        }
    }
    let initial = initial.ok_or_else(|| Error::parse(0, "missing 'initial:' line"))?;
    let terminal = terminal.ok_or_else(|| Error::parse(0, "missing 'terminal:' line"))?;

    let lookup = |name: &str, lineno: usize| -> Result<StateId> {
        state_names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::parse(lineno, format!("unknown state '{name}'")))
    };

    let initial_id = lookup(&initial, 0)?;
    let mut terminal_ids = Vec::new();
    for t in &terminal {
        terminal_ids.push(lookup(t, 0)?);
    }

    let mut resolved = Vec::new();
    for (lineno, src, ev, dst) in transitions {
        let s = lookup(&src, lineno)?;
        let d = lookup(&dst, lineno)?;
        let e = Event::new(&ev);
        if !alphabet.contains(&e) {
            return Err(Error::parse(lineno, format!("unknown event '{ev}'")));
        }
        if terminal_ids.contains(&s) {
            return Err(Error::parse(
                lineno,
                format!("state '{src}' is terminal but has an outgoing transition; terminals are absorbing"),
            ));
        }
        resolved.push((lineno, (s, e, d)));
    }

    // Re-validate through the constructor, mapping its message back to the
    // first offending transition line where possible.
    let triples: Vec<_> = resolved.iter().map(|(_, t)| t.clone()).collect();
    RewardMachine::new(alphabet, state_names, initial_id, &terminal_ids, &triples).map_err(|e| {
        if let Error::InvalidInput(msg) = &e {
            Error::parse(resolved.first().map(|(l, _)| *l).unwrap_or(0), msg.clone())
        } else {
            e
        }
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses `src -EVENT-> dst`.
fn parse_transition_line(line: &str) -> Option<(String, String, String)> {
    let open = line.find(" -")?;
    let close = line.find("-> ")?;
    if close <= open + 2 {
        return None;
    }
    let src = line[..open].trim();
    let ev = line[open + 2..close].trim();
    let dst = line[close + 3..].trim();
    if src.is_empty() || ev.is_empty() || dst.is_empty() || dst.split_whitespace().count() != 1 {
        return None;
    }
    Some((src.to_string(), ev.to_string(), dst.to_string()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const GENERATOR_RM: &str = "\
# pipe/door/generator team task
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

    pub(crate) const LABORATORY_RM: &str = "\
alphabet: C F R E M
states: w0 w1 w2 w3 w4
initial: w0
terminal: w4
w0 -C-> w1
w1 -F-> w2
w1 -R-> w3
w2 -E-> w4
w3 -M-> w4
";

    /// Shared fixture: the pipe/door/generator team machine.
    pub(crate) fn generator_rm() -> RewardMachine {
        parse_rm(GENERATOR_RM).unwrap()
    }

    /// Shared fixture: the two-wing laboratory team machine.
    pub(crate) fn laboratory_rm() -> RewardMachine {
        parse_rm(LABORATORY_RM).unwrap()
    }

    fn generator() -> RewardMachine {
        parse_rm(GENERATOR_RM).unwrap()
    }

    fn ev(s: &str) -> Event {
        Event::new(s)
    }

    fn seq(s: &str) -> Vec<Event> {
        s.split_whitespace().map(Event::new).collect()
    }

    #[test]
    fn parses_round_trip() {
        let rm = generator();
        assert_eq!(rm.num_states(), 6);
        let again = parse_rm(&rm.to_text()).unwrap();
        assert_eq!(again.num_states(), 6);
        assert_eq!(again.delta(0, &ev("P")), Some(1));
    }

    #[test]
    fn step_from_initial_on_pipe() {
        let rm = generator();
        let (u, r) = rm.step(rm.initial(), &ev("P")).unwrap();
        assert_eq!(rm.state_name(u), "u1");
        assert_eq!(r, 0.0);
    }

    #[test]
    fn undefined_event_stays_with_zero() {
        let rm = generator();
        let (u, r) = rm.step(rm.initial(), &ev("G")).unwrap();
        assert_eq!(u, rm.initial());
        assert_eq!(r, 0.0);
    }

    #[test]
    fn foreign_event_errors() {
        let rm = generator();
        assert!(rm.step(0, &ev("Z")).is_err());
        assert!(rm.run(&seq("P Z")).is_err());
    }

    #[test]
    fn ordered_run_rewards_once() {
        let rm = generator();
        let (r, u) = rm.run(&seq("P D G")).unwrap();
        assert_eq!(r, 1.0);
        assert!(rm.is_terminal(u));
        // Extending past the terminal keeps the total at 1.
        let (r, _) = rm.run(&seq("P D G G P")).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn out_of_order_run_is_rejected() {
        let rm = generator();
        let (r, u) = rm.run(&seq("D G P")).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(rm.state_name(u), "u4");
        // Empty sequence: reward 0, still at the initial state.
        let (r, u) = rm.run(&[]).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(u, rm.initial());
    }

    #[test]
    fn label_set_reading() {
        let rm = generator();
        // {P, D} from u0 commutes: both orders end in u3.
        let (u, r) = rm.read_label_set(rm.initial(), &LabelSet::from_events(seq("P D"))).unwrap();
        assert_eq!(rm.state_name(u), "u3");
        assert_eq!(r, 0.0);
        let (u, r) = rm.read_label_set(0, &LabelSet::empty()).unwrap();
        assert_eq!(u, 0);
        assert_eq!(r, 0.0);
    }

    #[cfg(debug_assertions)]
    #[test]
    fn order_dependent_label_set_is_a_consistency_error() {
        // From u2, {P, G} does not commute: P-then-G completes, G-then-P dies.
        let rm = generator();
        let u2 = rm.state_id("u2").unwrap();
        let err = rm.read_label_set(u2, &LabelSet::from_events(seq("P G"))).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn dead_states_found() {
        let rm = generator();
        let dead = rm.dead_states();
        assert_eq!(dead, vec![rm.state_id("u4").unwrap()]);
    }

    #[test]
    fn terminal_with_outgoing_transition_rejected() {
        let text = "\
alphabet: A
states: s t
initial: s
terminal: t
s -A-> t
t -A-> s
";
        let err = parse_rm(text).unwrap_err();
        assert!(err.to_string().contains("absorbing"), "got: {err}");
    }

    #[test]
    fn nondeterminism_rejected() {
        let text = "\
alphabet: A
states: s t
initial: s
terminal: t
s -A-> t
s -A-> s
";
        assert!(parse_rm(text).is_err());
    }

    #[test]
    fn unknown_names_carry_line_numbers() {
        let text = "\
alphabet: A
states: s t
initial: s
terminal: t
s -B-> t
";
        match parse_rm(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn missing_header_rejected() {
        assert!(parse_rm("alphabet: A\nstates: s\ninitial: s\n").is_err());
    }
}
