//! A finite-trace linear temporal logic fragment: atoms, boolean connectives,
//! and the temporal operators G (always), X (strong next), U (until), and
//! W (weak until).
//!
//! Traces are event sequences with exactly one event per position. Evaluation
//! ([`eval`]) is written directly from the textbook semantics and serves as
//! the oracle for the DFA compiler; progression ([`progress`]) is the rewrite
//! the compiler is built on, and the two are tested against each other.
//!
//! End-of-trace conventions: `G f` is vacuously true on the empty suffix,
//! `X f` is false at the last position, and `g W h` is `(g U h) | G g`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::event::Event;

/// Formula AST. Conjunction and disjunction are n-ary so that
/// [`simplify`] can produce a canonical flattened, sorted operand list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Event),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Always(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    WeakUntil(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(Event::new(name))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::True,
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::And(fs),
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::False,
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Box::new(f))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn weak_until(a: Formula, b: Formula) -> Formula {
        Formula::WeakUntil(Box::new(a), Box::new(b))
    }

    /// All atoms occurring in the formula.
    pub fn atoms(&self) -> BTreeSet<Event> {
        let mut set = BTreeSet::new();
        self.collect_atoms(&mut set);
        set
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Event>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(e) => {
                out.insert(e.clone());
            }
            Formula::Not(f) | Formula::Next(f) | Formula::Always(f) => f.collect_atoms(out),
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.collect_atoms(out);
                }
            }
            Formula::Implies(a, b) | Formula::Until(a, b) | Formula::WeakUntil(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

/// Truth of `f` on `trace` starting at position `pos`.
///
/// This is the reference semantics: a direct recursive transcription with no
/// sharing of machinery with [`progress`] or [`simplify`], so it can serve as
/// an independent oracle for the compiled DFAs.
pub fn eval(f: &Formula, trace: &[Event], pos: usize) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(e) => pos < trace.len() && trace[pos] == *e,
        Formula::Not(g) => !eval(g, trace, pos),
        Formula::And(fs) => fs.iter().all(|g| eval(g, trace, pos)),
        Formula::Or(fs) => fs.iter().any(|g| eval(g, trace, pos)),
        Formula::Implies(a, b) => !eval(a, trace, pos) || eval(b, trace, pos),
        Formula::Next(g) => pos + 1 < trace.len() && eval(g, trace, pos + 1),
        Formula::Always(g) => (pos..trace.len()).all(|j| eval(g, trace, j)),
        Formula::Until(g, h) => (pos..trace.len())
            .any(|j| eval(h, trace, j) && (pos..j).all(|k| eval(g, trace, k))),
        Formula::WeakUntil(g, h) => {
            let until = (pos..trace.len())
                .any(|j| eval(h, trace, j) && (pos..j).all(|k| eval(g, trace, k)));
            until || (pos..trace.len()).all(|j| eval(g, trace, j))
        }
    }
}

/// Truth of `f` on the empty trace (equivalently, at the end of any trace).
pub fn eval_empty(f: &Formula) -> bool {
    match f {
        Formula::True => true,
        Formula::False | Formula::Atom(_) | Formula::Next(_) | Formula::Until(_, _) => false,
        Formula::Not(g) => !eval_empty(g),
        Formula::And(fs) => fs.iter().all(eval_empty),
        Formula::Or(fs) => fs.iter().any(eval_empty),
        Formula::Implies(a, b) => !eval_empty(a) || eval_empty(b),
        Formula::Always(_) | Formula::WeakUntil(_, _) => true,
    }
}

/// The obligation satisfied by exactly the non-empty traces: some position
/// must remain. Progressing it through any event discharges it to `true`.
fn some_event() -> Formula {
    Formula::until(Formula::True, Formula::True)
}

/// Rewrites `f` into the obligation that must hold of the trace remaining
/// after consuming one position carrying exactly the event `e`.
///
/// Atoms become constants immediately (the position carries `e` and nothing
/// else), which is what keeps progressed formula-states small.
pub fn progress(f: &Formula, e: &Event) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(a) => {
            if a == e {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Not(g) => Formula::not(progress(g, e)),
        Formula::And(fs) => Formula::and(fs.iter().map(|g| progress(g, e)).collect()),
        Formula::Or(fs) => Formula::or(fs.iter().map(|g| progress(g, e)).collect()),
        Formula::Implies(a, b) => Formula::implies(progress(a, e), progress(b, e)),
        // Strong next: besides the inner obligation, some position must
        // actually remain after `e`, which `g` alone may not demand.
        Formula::Next(g) => Formula::and(vec![(**g).clone(), some_event()]),
        Formula::Always(g) => Formula::and(vec![progress(g, e), f.clone()]),
        Formula::Until(g, h) => Formula::or(vec![
            progress(h, e),
            Formula::and(vec![progress(g, e), f.clone()]),
        ]),
        Formula::WeakUntil(g, h) => Formula::or(vec![
            progress(h, e),
            Formula::and(vec![progress(g, e), f.clone()]),
        ]),
    }
}

/// Canonical simplification: constant folding, negation pushing over boolean
/// connectives, flattened/sorted/deduplicated conjunctions and disjunctions,
/// complementary-literal detection, and desugaring of `->` and `W`.
///
/// Progressed formulas that denote the same obligation usually normalize to
/// the same value, which keeps the compiler's formula-state space small; full
/// semantic canonicity is not needed because the compiled DFA is minimized.
pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(g) => match simplify(g) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            Formula::And(fs) => simplify(&Formula::or(
                fs.into_iter().map(|x| Formula::not(x)).collect(),
            )),
            Formula::Or(fs) => simplify(&Formula::and(
                fs.into_iter().map(|x| Formula::not(x)).collect(),
            )),
            s => Formula::not(s),
        },
        Formula::And(fs) => {
            let mut set = BTreeSet::new();
            if !flatten_and(fs, &mut set) {
                return Formula::False;
            }
            for g in &set {
                if set.contains(&Formula::not(g.clone())) {
                    return Formula::False;
                }
            }
            Formula::and(set.into_iter().collect())
        }
        Formula::Or(fs) => {
            let mut set = BTreeSet::new();
            if !flatten_or(fs, &mut set) {
                return Formula::True;
            }
            for g in &set {
                if set.contains(&Formula::not(g.clone())) {
                    return Formula::True;
                }
            }
            Formula::or(set.into_iter().collect())
        }
        Formula::Implies(a, b) => simplify(&Formula::or(vec![
            Formula::not((**a).clone()),
            (**b).clone(),
        ])),
        Formula::Next(g) => match simplify(g) {
            // A strong next of an unsatisfiable obligation can never hold.
            Formula::False => Formula::False,
            s => Formula::next(s),
        },
        Formula::Always(g) => match simplify(g) {
            Formula::True => Formula::True,
            s => Formula::always(s),
        },
        Formula::Until(g, h) => {
            let (sg, sh) = (simplify(g), simplify(h));
            match (&sg, &sh) {
                // `g U true` waits for nothing, but still needs a position
                // to exist; folding to `true` would also admit the empty
                // suffix.
                (_, Formula::True) => some_event(),
                (_, Formula::False) => Formula::False,
                // With g unsatisfiable, the witness position must be the
                // first — and in particular must exist.
                (Formula::False, _) if !eval_empty(&sh) => sh,
                (Formula::False, _) => simplify(&Formula::and(vec![sh, some_event()])),
                _ => Formula::until(sg, sh),
            }
        }
        Formula::WeakUntil(g, h) => simplify(&Formula::or(vec![
            Formula::until((**g).clone(), (**h).clone()),
            Formula::always((**g).clone()),
        ])),
    }
}

/// Flattens simplified conjuncts into `out`; false means the whole
/// conjunction collapsed to `false`.
fn flatten_and(fs: &[Formula], out: &mut BTreeSet<Formula>) -> bool {
    for g in fs {
        match simplify(g) {
            Formula::True => {}
            Formula::False => return false,
            Formula::And(inner) => {
                if !flatten_and(&inner, out) {
                    return false;
                }
            }
            s => {
                out.insert(s);
            }
        }
    }
    true
}

/// Flattens simplified disjuncts into `out`; false means the whole
/// disjunction collapsed to `true`.
fn flatten_or(fs: &[Formula], out: &mut BTreeSet<Formula>) -> bool {
    for g in fs {
        match simplify(g) {
            Formula::False => {}
            Formula::True => return false,
            Formula::Or(inner) => {
                if !flatten_or(&inner, out) {
                    return false;
                }
            }
            s => {
                out.insert(s);
            }
        }
    }
    true
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, f, 0)
    }
}

fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Implies(_, _) => 1,
        Formula::Or(_) => 2,
        Formula::And(_) => 3,
        Formula::Until(_, _) | Formula::WeakUntil(_, _) => 4,
        Formula::Not(_) | Formula::Next(_) | Formula::Always(_) => 5,
        Formula::True | Formula::False | Formula::Atom(_) => 6,
    }
}

fn write_prec(f: &Formula, out: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
    let prec = precedence(f);
    if prec < min {
        out.write_str("(")?;
        write_prec(f, out, 0)?;
        return out.write_str(")");
    }
    match f {
        Formula::True => out.write_str("true"),
        Formula::False => out.write_str("false"),
        Formula::Atom(e) => write!(out, "{e}"),
        // Unary operands print at the unary level: prefix chains like
        // `G !X p` are unambiguous and re-parse identically.
        Formula::Not(g) => {
            out.write_str("!")?;
            write_prec(g, out, 5)
        }
        Formula::Next(g) => {
            out.write_str("X ")?;
            write_prec(g, out, 5)
        }
        Formula::Always(g) => {
            out.write_str("G ")?;
            write_prec(g, out, 5)
        }
        Formula::And(fs) => {
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.write_str(" & ")?;
                }
                write_prec(g, out, 4)?;
            }
            Ok(())
        }
        Formula::Or(fs) => {
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.write_str(" | ")?;
                }
                write_prec(g, out, 3)?;
            }
            Ok(())
        }
        Formula::Implies(a, b) => {
            write_prec(a, out, 2)?;
            out.write_str(" -> ")?;
            write_prec(b, out, 2)
        }
        Formula::Until(a, b) => {
            write_prec(a, out, 5)?;
            out.write_str(" U ")?;
            write_prec(b, out, 5)
        }
        Formula::WeakUntil(a, b) => {
            write_prec(a, out, 5)?;
            out.write_str(" W ")?;
            write_prec(b, out, 5)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Bang,
    Amp,
    Pipe,
    Arrow,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '!' => {
                chars.next();
                tokens.push(Token::Bang);
            }
            '&' => {
                chars.next();
                tokens.push(Token::Amp);
            }
            '|' => {
                chars.next();
                tokens.push(Token::Pipe);
            }
            '(' => {
                chars.next();
                tokens.push(Token::LParen);
            }
            ')' => {
                chars.next();
                tokens.push(Token::RParen);
            }
            '-' => {
                chars.next();
                if chars.next() != Some('>') {
                    return Err(Error::invalid("expected '>' after '-' in formula"));
                }
                tokens.push(Token::Arrow);
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        name.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Ident(name));
            }
            other => {
                return Err(Error::invalid(format!(
                    "unexpected character '{other}' in formula"
                )));
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    /// Whether the token can begin a formula; used to tell the operators
    /// `G`/`X` apart from atoms of the same name (`G !G` reads as G applied
    /// to the negated atom G).
    fn starts_formula(t: Option<&Token>) -> bool {
        matches!(t, Some(Token::Ident(_) | Token::Bang | Token::LParen))
    }

    fn implies(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.peek() == Some(&Token::Arrow) {
            self.next();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut args = vec![self.and()?];
        while self.peek() == Some(&Token::Pipe) {
            self.next();
            args.push(self.and()?);
        }
        Ok(Formula::or(args))
    }

    fn and(&mut self) -> Result<Formula> {
        let mut args = vec![self.until()?];
        while self.peek() == Some(&Token::Amp) {
            self.next();
            args.push(self.until()?);
        }
        Ok(Formula::and(args))
    }

    fn until(&mut self) -> Result<Formula> {
        let lhs = self.unary()?;
        if let Some(Token::Ident(name)) = self.peek() {
            let op = name.as_str();
            if op == "U" || op == "W" {
                let weak = op == "W";
                self.next();
                let rhs = self.until()?;
                return Ok(if weak {
                    Formula::weak_until(lhs, rhs)
                } else {
                    Formula::until(lhs, rhs)
                });
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(Token::Bang) => {
                self.next();
                Ok(Formula::not(self.unary()?))
            }
            Some(Token::Ident(name)) if name == "G" || name == "X" => {
                let always = name == "G";
                if Self::starts_formula(self.tokens.get(self.pos + 1)) {
                    self.next();
                    let arg = self.unary()?;
                    Ok(if always {
                        Formula::always(arg)
                    } else {
                        Formula::next(arg)
                    })
                } else {
                    self.atom()
                }
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula> {
        match self.next() {
            Some(Token::Ident(name)) => Ok(match name.as_str() {
                "true" => Formula::True,
                "false" => Formula::False,
                _ => Formula::atom(&name),
            }),
            Some(Token::LParen) => {
                let inner = self.implies()?;
                if self.next() != Some(Token::RParen) {
                    return Err(Error::invalid("missing ')' in formula"));
                }
                Ok(inner)
            }
            Some(t) => Err(Error::invalid(format!(
                "unexpected token {t:?} in formula"
            ))),
            None => Err(Error::invalid("formula ended unexpectedly")),
        }
    }
}

/// Parses a formula from concrete syntax.
///
/// Operators by loosening precedence: `! G X` (prefix, tightest), `U W`
/// (right-associative), `&`, `|`, `->` (right-associative). `G` and `X` are
/// parsed as operators when followed by something that starts a formula and
/// as atoms otherwise, so event names may collide with them.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::invalid("empty formula"));
    }
    let mut parser = Parser { tokens, pos: 0 };
    let f = parser.implies()?;
    if let Some(t) = parser.peek() {
        return Err(Error::invalid(format!(
            "unexpected trailing {t:?} in formula"
        )));
    }
    Ok(f)
}
