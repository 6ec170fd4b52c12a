//! Total deterministic finite automata over event alphabets.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::event::{Event, EventAlphabet};
use crate::rm::StateId;

#[derive(Debug, Clone)]
pub struct Dfa {
    alphabet: EventAlphabet,
    state_names: Vec<String>,
    initial: StateId,
    accepting: Vec<bool>,
    /// `delta[state][event index]` — total by construction.
    delta: Vec<Vec<StateId>>,
}

impl Dfa {
    pub fn new(
        alphabet: EventAlphabet,
        state_names: Vec<String>,
        initial: StateId,
        accepting: Vec<bool>,
        delta: Vec<Vec<StateId>>,
    ) -> Result<Self> {
        let n = state_names.len();
        if n == 0 {
            return Err(Error::invalid("a DFA needs at least one state"));
        }
        if initial >= n || accepting.len() != n || delta.len() != n {
            return Err(Error::invalid("DFA part sizes disagree"));
        }
        for row in &delta {
            if row.len() != alphabet.len() {
                return Err(Error::invalid("DFA transition table is not total"));
            }
            if row.iter().any(|&d| d >= n) {
                return Err(Error::invalid("DFA transition target out of range"));
            }
        }
        Ok(Dfa { alphabet, state_names, initial, accepting, delta })
    }

    /// The one-state DFA over `alphabet` that accepts every sequence.
    pub fn trivial_accepting(alphabet: EventAlphabet) -> Dfa {
        let width = alphabet.len();
        Dfa {
            alphabet,
            state_names: vec!["q0".into()],
            initial: 0,
            accepting: vec![true],
            delta: vec![vec![0; width]],
        }
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

    pub fn state_name(&self, q: StateId) -> &str {
        &self.state_names[q]
    }

    pub fn is_accepting(&self, q: StateId) -> bool {
        self.accepting[q]
    }

    pub fn step(&self, q: StateId, e: &Event) -> Result<StateId> {
        let ei = self
            .alphabet
            .index_of(e)
            .ok_or_else(|| Error::invalid(format!("event '{e}' is not in this DFA's alphabet")))?;
        Ok(self.delta[q][ei])
    }

    pub fn step_idx(&self, q: StateId, ei: usize) -> StateId {
        self.delta[q][ei]
    }

    /// Runs a sequence from the initial state, returning the final state.
    pub fn run(&self, seq: &[Event]) -> Result<StateId> {
        let mut q = self.initial;
        for e in seq {
            q = self.step(q, e)?;
        }
        Ok(q)
    }

    pub fn accepts(&self, seq: &[Event]) -> Result<bool> {
        Ok(self.accepting[self.run(seq)?])
    }

    /// Minimizes by Hopcroft's partition refinement, after dropping states
    /// unreachable from the initial state. State names of the result list the
    /// merged originals joined by `+`.
    pub fn minimize(&self) -> Dfa {
        let reach = self.reachable();
        let m = reach.len();
        let mut back = vec![usize::MAX; self.num_states()];
        for (i, &q) in reach.iter().enumerate() {
            back[q] = i;
        }
        let width = self.alphabet.len();
        let delta: Vec<Vec<usize>> = reach
            .iter()
            .map(|&q| (0..width).map(|ei| back[self.delta[q][ei]]).collect())
            .collect();
        let accepting: Vec<bool> = reach.iter().map(|&q| self.accepting[q]).collect();

        // Hopcroft: start from the accepting/rejecting split, refine against
        // preimages of splitter blocks.
        let mut block_of: Vec<usize> = accepting.iter().map(|&a| usize::from(a)).collect();
        let mut blocks: Vec<Vec<usize>> = vec![
            (0..m).filter(|&q| !accepting[q]).collect(),
            (0..m).filter(|&q| accepting[q]).collect(),
        ];
        blocks.retain(|b| !b.is_empty());
        for (bi, b) in blocks.iter().enumerate() {
            for &q in b {
                block_of[q] = bi;
            }
        }
        let mut preimage: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); m]; width];
        for q in 0..m {
            for (ei, pre) in preimage.iter_mut().enumerate() {
                pre[delta[q][ei]].push(q);
            }
        }
        let mut worklist: Vec<(usize, usize)> =
            (0..blocks.len()).flat_map(|b| (0..width).map(move |e| (b, e))).collect();
        while let Some((bi, ei)) = worklist.pop() {
            let splitter: Vec<usize> = blocks[bi].clone();
            let mut movers: std::collections::HashMap<usize, Vec<usize>> =
                std::collections::HashMap::new();
            let in_splitter: std::collections::HashSet<usize> = splitter.iter().copied().collect();
            let mut touched: std::collections::HashSet<usize> = std::collections::HashSet::new();
            for &q in &splitter {
                for &p in &preimage[ei][q] {
                    movers.entry(block_of[p]).or_default().push(p);
                    touched.insert(block_of[p]);
                }
            }
            let _ = in_splitter;
            for b in touched {
                let hits = &movers[&b];
                if hits.len() == blocks[b].len() {
                    continue;
                }
                let hit_set: std::collections::HashSet<usize> = hits.iter().copied().collect();
                let (stay, go): (Vec<usize>, Vec<usize>) =
                    blocks[b].iter().partition(|q| !hit_set.contains(q));
                let new_b = blocks.len();
                blocks[b] = stay;
                blocks.push(go);
                for &q in &blocks[new_b] {
                    block_of[q] = new_b;
                }
                for e2 in 0..width {
                    worklist.push((new_b, e2));
                }
            }
        }

        // Rebuild in a stable order: blocks sorted by their smallest member.
        let mut order: Vec<usize> = (0..blocks.len()).filter(|&b| !blocks[b].is_empty()).collect();
        order.sort_by_key(|&b| *blocks[b].iter().min().unwrap());
        let mut new_id = vec![usize::MAX; blocks.len()];
        for (i, &b) in order.iter().enumerate() {
            new_id[b] = i;
        }
        let state_names: Vec<String> = order
            .iter()
            .map(|&b| {
                let mut members: Vec<&str> =
                    blocks[b].iter().map(|&q| self.state_names[reach[q]].as_str()).collect();
                members.sort();
                members.join("+")
            })
            .collect();
        let new_delta: Vec<Vec<usize>> = order
            .iter()
            .map(|&b| {
                let rep = blocks[b][0];
                (0..width).map(|ei| new_id[block_of[delta[rep][ei]]]).collect()
            })
            .collect();
        let new_accepting: Vec<bool> = order.iter().map(|&b| accepting[blocks[b][0]]).collect();
        Dfa {
            alphabet: self.alphabet.clone(),
            state_names,
            initial: new_id[block_of[back[self.reachable()[0]]]],
            accepting: new_accepting,
            delta: new_delta,
        }
    }

    fn reachable(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = vec![self.initial];
        seen[self.initial] = true;
        let mut order = vec![self.initial];
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            for &d in &self.delta[q] {
                if !seen[d] {
                    seen[d] = true;
                    queue.push(d);
                    order.push(d);
                }
            }
        }
        order
    }

    /// Text rendering mirroring the reward-machine format, with `accepting:`
    /// in place of `terminal:`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.alphabet.iter().map(Event::name).collect();
        writeln!(out, "alphabet: {}", names.join(" ")).unwrap();
        writeln!(out, "states: {}", self.state_names.join(" ")).unwrap();
        writeln!(out, "initial: {}", self.state_names[self.initial]).unwrap();
        let acc: Vec<&str> = (0..self.num_states())
            .filter(|&q| self.accepting[q])
            .map(|q| self.state_names[q].as_str())
            .collect();
        writeln!(out, "accepting: {}", acc.join(" ")).unwrap();
        for q in 0..self.num_states() {
            for (ei, &d) in self.delta[q].iter().enumerate() {
                writeln!(
                    out,
                    "{} -{}-> {}",
                    self.state_names[q],
                    self.alphabet.get(ei),
                    self.state_names[d]
                )
                .unwrap();
            }
        }
        out
    }

    /// Graphviz rendering for `--dot` output.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  node [shape=circle];\n");
        for q in 0..self.num_states() {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            writeln!(out, "  \"{}\" [shape={shape}];", self.state_names[q]).unwrap();
        }
        writeln!(out, "  init [shape=point];").unwrap();
        writeln!(out, "  init -> \"{}\";", self.state_names[self.initial]).unwrap();
        for q in 0..self.num_states() {
            for (ei, &d) in self.delta[q].iter().enumerate() {
                writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"{}\"];",
                    self.state_names[q],
                    self.state_names[d],
                    self.alphabet.get(ei)
                )
                .unwrap();
            }
        }
        out.push_str("}\n");
        out
    }
}
