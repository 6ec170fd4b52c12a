//! Grid worlds parsed from ASCII layout files.
//!
//! A layout file is a rectangular block of characters followed by a `legend:`
//! section mapping each character to a meaning. `#` (wall) and `.` (open) are
//! predefined; every other character used in the grid must be declared.
//!
//! ```text
//! #######
//! #1...P#
//! #v#####
//! #s....#
//! #######
//! legend:
//! 1 = start 1
//! P = trigger P on enter
//! v = one-way down
//! s = trigger D on stay
//! ```
//!
//! Cell meanings: `start N` (agent N's initial cell), `trigger E on
//! enter|stay|exit` (emits event E while the agent's machine can consume it),
//! `sensor E` (like a trigger, but also gated by the episode's accident
//! draw), `door E` (impassable while the agent's machine can still consume
//! E), and `one-way up|down|left|right` (exit only in that direction, entry
//! never against it).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::event::Event;

/// The five movement actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    /// Row/column displacement.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }

    pub fn opposite(self) -> Action {
        match self {
            Action::Up => Action::Down,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
            Action::Right => Action::Left,
            Action::Stay => Action::Stay,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Stay => 4,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

/// When a trigger cell emits its event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerOn {
    Enter,
    Stay,
    Exit,
}

/// What a grid cell is. A trigger cell may carry several bindings firing on
/// different occupancy phases (the button cells emit an arrival signal on
/// enter, the press while occupied, and a departure signal on exit).
#[derive(Debug, Clone, PartialEq)]
pub enum CellKind {
    Wall,
    Open,
    Trigger { bindings: Vec<(Event, TriggerOn)> },
    Sensor { event: Event },
    Door { event: Event },
    OneWay { dir: Action },
}

/// A cell position as (row, column).
pub type Cell = (usize, usize);

/// A parsed grid: dimensions, per-cell kinds, and agent start positions.
#[derive(Debug, Clone)]
pub struct GridSpec {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
    starts: HashMap<u8, Cell>,
}

impl GridSpec {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self, cell: Cell) -> &CellKind {
        &self.cells[cell.0 * self.width + cell.1]
    }

    /// The declared start of agent `n` (1-based as written in layouts).
    pub fn start(&self, n: u8) -> Option<Cell> {
        self.starts.get(&n).copied()
    }

    pub fn in_bounds(&self, row: i32, col: i32) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Compact cell index for Q-table addressing.
    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// All cells that are not walls.
    pub fn open_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| !matches!(self.kind(cell), CellKind::Wall))
            .collect()
    }

    /// Events referenced by trigger, sensor, or door cells.
    pub fn referenced_events(&self) -> Vec<Event> {
        let mut out: Vec<Event> = Vec::new();
        let mut push = |e: &Event| {
            if !out.contains(e) {
                out.push(e.clone());
            }
        };
        for kind in &self.cells {
            match kind {
                CellKind::Trigger { bindings } => bindings.iter().for_each(|(e, _)| push(e)),
                CellKind::Sensor { event } | CellKind::Door { event } => push(event),
                _ => {}
            }
        }
        out
    }

    /// Events that can be emitted by a cell of this grid (trigger bindings
    /// and sensors; door events only gate movement).
    pub fn emitting_events(&self) -> Vec<Event> {
        let mut out: Vec<Event> = Vec::new();
        let mut push = |e: &Event| {
            if !out.contains(e) {
                out.push(e.clone());
            }
        };
        for kind in &self.cells {
            match kind {
                CellKind::Trigger { bindings } => bindings.iter().for_each(|(e, _)| push(e)),
                CellKind::Sensor { event } => push(event),
                _ => {}
            }
        }
        out
    }

    /// Cells of a given kind predicate, for tests and environment hooks.
    pub fn cells_where(&self, mut pred: impl FnMut(&CellKind) -> bool) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| pred(self.kind(cell)))
            .collect()
    }
}

fn parse_direction(word: &str) -> Result<Action> {
    match word {
        "up" => Ok(Action::Up),
        "down" => Ok(Action::Down),
        "left" => Ok(Action::Left),
        "right" => Ok(Action::Right),
        other => Err(Error::invalid(format!("unknown direction '{other}'"))),
    }
}

fn parse_trigger_on(word: &str) -> Result<TriggerOn> {
    match word {
        "enter" => Ok(TriggerOn::Enter),
        "stay" => Ok(TriggerOn::Stay),
        "exit" => Ok(TriggerOn::Exit),
        other => Err(Error::invalid(format!("unknown trigger mode '{other}'"))),
    }
}

enum LegendEntry {
    Kind(CellKind),
    Start(u8),
}

fn parse_legend_entry(lineno: usize, text: &str) -> Result<LegendEntry> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let entry = match words.as_slice() {
        ["wall"] => LegendEntry::Kind(CellKind::Wall),
        ["open"] => LegendEntry::Kind(CellKind::Open),
        ["start", n] => {
            let n: u8 = n
                .parse()
                .map_err(|_| Error::parse(lineno, "start needs an agent number"))?;
            LegendEntry::Start(n)
        }
        ["trigger", event, "on", on] => LegendEntry::Kind(CellKind::Trigger {
            bindings: vec![(
                Event::new(event),
                parse_trigger_on(on).map_err(|e| Error::parse(lineno, e.to_string()))?,
            )],
        }),
        ["sensor", event] => LegendEntry::Kind(CellKind::Sensor {
            event: Event::new(event),
        }),
        ["door", event] => LegendEntry::Kind(CellKind::Door {
            event: Event::new(event),
        }),
        ["one-way", dir] => LegendEntry::Kind(CellKind::OneWay {
            dir: parse_direction(dir).map_err(|e| Error::parse(lineno, e.to_string()))?,
        }),
        _ => {
            return Err(Error::parse(
                lineno,
                format!("unrecognized legend entry '{text}'"),
            ));
        }
    };
    Ok(entry)
}

/// Parses a layout file into a [`GridSpec`].
pub fn parse_layout(text: &str) -> Result<GridSpec> {
    let mut rows: Vec<&str> = Vec::new();
    let mut legend: HashMap<char, LegendEntry> = HashMap::new();
    let mut in_legend = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if !in_legend {
            if raw.trim() == "legend:" {
                in_legend = true;
                continue;
            }
            if raw.trim_start().starts_with('#') && raw.trim().chars().any(|c| c == ' ') {
                // Grid rows are wall-delimited and contain no spaces; a '#'
                // line with spaces is a comment.
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            rows.push(raw.trim_end());
            continue;
        }
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((ch, rest)) = line.split_once('=') else {
            return Err(Error::parse(lineno, "legend lines look like '<char> = ...'"));
        };
        let ch = ch.trim();
        if ch.chars().count() != 1 {
            return Err(Error::parse(lineno, "legend key must be a single character"));
        }
        let ch = ch.chars().next().unwrap();
        let entry = parse_legend_entry(lineno, rest)?;
        match (legend.get_mut(&ch), entry) {
            (
                Some(LegendEntry::Kind(CellKind::Trigger { bindings })),
                LegendEntry::Kind(CellKind::Trigger { bindings: more }),
            ) => {
                // Repeated trigger lines stack onto the same character.
                if more.iter().any(|(e, _)| bindings.iter().any(|(b, _)| b == e)) {
                    return Err(Error::parse(
                        lineno,
                        format!("'{ch}' already triggers that event"),
                    ));
                }
                bindings.extend(more);
            }
            (Some(_), _) => {
                return Err(Error::parse(lineno, format!("duplicate legend key '{ch}'")));
            }
            (None, entry) => {
                legend.insert(ch, entry);
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::invalid("layout has no grid rows"));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    if rows.iter().any(|r| r.chars().count() != width) {
        return Err(Error::invalid("layout rows must all have the same width"));
    }

    let mut cells = Vec::with_capacity(width * height);
    let mut starts: HashMap<u8, Cell> = HashMap::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            let kind = match ch {
                '#' => CellKind::Wall,
                '.' => CellKind::Open,
                _ => match legend.get(&ch) {
                    Some(LegendEntry::Kind(kind)) => kind.clone(),
                    Some(LegendEntry::Start(n)) => {
                        if starts.insert(*n, (r, c)).is_some() {
                            return Err(Error::invalid(format!(
                                "agent {n} has more than one start cell"
                            )));
                        }
                        CellKind::Open
                    }
                    None => {
                        return Err(Error::invalid(format!(
                            "grid character '{ch}' is not in the legend"
                        )));
                    }
                },
            };
            cells.push(kind);
        }
    }

    Ok(GridSpec {
        width,
        height,
        cells,
        starts,
    })
}
