//! Metric temporal logic over sampled trajectories.
//!
//! Formulas are evaluated with discrete (pointwise) semantics: predicates are
//! checked only at sample instants and window endpoints snap to the nearest
//! sample. The textual form is a prefix notation with fixed arities:
//!
//! ```text
//! formula := true | false | ( formula )
//!          | not formula | and formula formula | or formula formula
//!          | always a b formula | eventually a b formula
//!          | until a b formula formula
//!          | geq expr expr | gt expr expr | leq expr expr | lt expr expr
//! expr    := number | channel | ( expr )
//!          | abs expr | neg expr | add expr expr | sub expr expr | mul expr expr
//! ```
//!
//! `geq a b` holds when `a − b ≥ 0`; `gt` is the strict variant. Channels
//! are `t`, the system's state names and its auxiliary signals.

use std::fmt;

use crate::error::{Error, Result};
use crate::ode::{ChannelRef, Trajectory};

/// Requirement outcome: `+1` satisfied, `−1` violated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Unsafe,
    Safe,
}

impl Label {
    pub fn from_bool(safe: bool) -> Self {
        if safe {
            Label::Safe
        } else {
            Label::Unsafe
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Label::Safe => 1,
            Label::Unsafe => -1,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.value())
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Safe => Label::Unsafe,
            Label::Unsafe => Label::Safe,
        }
    }

    pub fn is_safe(self) -> bool {
        self == Label::Safe
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Safe),
            -1 => Ok(Label::Unsafe),
            other => Err(Error::Format { what: "label", message: format!("expected ±1, got {other}") }),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Safe => write!(f, "+1"),
            Label::Unsafe => write!(f, "-1"),
        }
    }
}

/// Real-valued signal expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Channel(String),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn channel(name: &str) -> Self {
        Expr::Channel(name.to_string())
    }

    pub fn abs(self) -> Self {
        Expr::Abs(Box::new(self))
    }

    pub fn sub(self, rhs: Expr) -> Self {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn add(self, rhs: Expr) -> Self {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    /// Predicate `self ≥ 0`.
    pub fn geq_zero(self) -> Formula {
        Formula::Pred { zeta: self, strict: false }
    }

    /// Predicate `self > 0`.
    pub fn gt_zero(self) -> Formula {
        Formula::Pred { zeta: self, strict: true }
    }

    fn channels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Channel(name) => out.push(name),
            Expr::Neg(a) | Expr::Abs(a) => a.channels(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.channels(out);
                b.channels(out);
            }
        }
    }
}

/// MTL requirement tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    False,
    /// `zeta > 0` when strict, otherwise `zeta ≥ 0`.
    Pred { zeta: Expr, strict: bool },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always { start: f64, end: f64, arg: Box<Formula> },
    Eventually { start: f64, end: f64, arg: Box<Formula> },
    Until { start: f64, end: f64, lhs: Box<Formula>, rhs: Box<Formula> },
}

impl Formula {
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn always(start: f64, end: f64, arg: Formula) -> Self {
        Formula::Always { start, end, arg: Box::new(arg) }
    }

    pub fn eventually(start: f64, end: f64, arg: Formula) -> Self {
        Formula::Eventually { start, end, arg: Box::new(arg) }
    }

    pub fn until(start: f64, end: f64, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until { start, end, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// Latest time offset the formula inspects relative to its evaluation time.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::False | Formula::Pred { .. } => 0.0,
            Formula::Not(a) => a.horizon(),
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Always { end, arg, .. } | Formula::Eventually { end, arg, .. } => end + arg.horizon(),
            Formula::Until { end, lhs, rhs, .. } => end + lhs.horizon().max(rhs.horizon()),
        }
    }

    /// Names of all channels referenced by predicates.
    pub fn channels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_channels(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_channels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Pred { zeta, .. } => zeta.channels(out),
            Formula::Not(a) => a.collect_channels(out),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_channels(out);
                b.collect_channels(out);
            }
            Formula::Always { arg, .. } | Formula::Eventually { arg, .. } => arg.collect_channels(out),
            Formula::Until { lhs, rhs, .. } => {
                lhs.collect_channels(out);
                rhs.collect_channels(out);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |start: f64, end: f64| {
            if start >= 0.0 && start <= end && end.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("invalid temporal window [{start}, {end}]")))
            }
        };
        match self {
            Formula::True | Formula::False | Formula::Pred { .. } => Ok(()),
            Formula::Not(a) => a.validate(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.validate()?;
                b.validate()
            }
            Formula::Always { start, end, arg } | Formula::Eventually { start, end, arg } => {
                check(*start, *end)?;
                arg.validate()
            }
            Formula::Until { start, end, lhs, rhs } => {
                check(*start, *end)?;
                lhs.validate()?;
                rhs.validate()
            }
        }
    }
}

// ─── Display (DSL output) ────────────────────────────────────────────

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Channel(name) => write!(f, "{name}"),
            Expr::Neg(a) => write!(f, "(neg {a})"),
            Expr::Abs(a) => write!(f, "(abs {a})"),
            Expr::Add(a, b) => write!(f, "(add {a} {b})"),
            Expr::Sub(a, b) => write!(f, "(sub {a} {b})"),
            Expr::Mul(a, b) => write!(f, "(mul {a} {b})"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Pred { zeta, strict: false } => write!(f, "(geq {zeta} 0)"),
            Formula::Pred { zeta, strict: true } => write!(f, "(gt {zeta} 0)"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Always { start, end, arg } => write!(f, "(always {start} {end} {arg})"),
            Formula::Eventually { start, end, arg } => write!(f, "(eventually {start} {end} {arg})"),
            Formula::Until { start, end, lhs, rhs } => write!(f, "(until {start} {end} {lhs} {rhs})"),
        }
    }
}

// ─── Parser ──────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(src: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in src.char_indices() {
        match c {
            '(' | ')' | ' ' | '\t' | '\n' | '\r' => {
                if let Some(s) = start.take() {
                    tokens.push(Token::Atom(&src[s..i]));
                }
                match c {
                    '(' => tokens.push(Token::Open),
                    ')' => tokens.push(Token::Close),
                    _ => {}
                }
            }
            _ => {
                if start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(s) = start {
        tokens.push(Token::Atom(&src[s..]));
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { position: self.pos, message: message.into() })
    }

    fn next(&mut self) -> Result<Token<'a>> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next()? {
            Token::Close => Ok(()),
            _ => {
                self.pos -= 1;
                self.error("expected `)`")
            }
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next()? {
            Token::Atom(a) => match a.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => {
                    self.pos -= 1;
                    self.error(format!("expected a number, found `{a}`"))
                }
            },
            _ => {
                self.pos -= 1;
                self.error("expected a number")
            }
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        let atom = match self.next()? {
            Token::Open => {
                let f = self.formula()?;
                self.expect_close()?;
                return Ok(f);
            }
            Token::Close => {
                self.pos -= 1;
                return self.error("unexpected `)`");
            }
            Token::Atom(a) => a,
        };
        Ok(match atom {
            "true" => Formula::True,
            "false" => Formula::False,
            "not" => Formula::not(self.formula()?),
            "and" => Formula::and(self.formula()?, self.formula()?),
            "or" => Formula::or(self.formula()?, self.formula()?),
            "always" | "eventually" | "until" => {
                let start = self.number()?;
                let end = self.number()?;
                if !(start >= 0.0 && start <= end) {
                    return self.error(format!("invalid window [{start}, {end}]"));
                }
                match atom {
                    "always" => Formula::always(start, end, self.formula()?),
                    "eventually" => Formula::eventually(start, end, self.formula()?),
                    _ => Formula::until(start, end, self.formula()?, self.formula()?),
                }
            }
            "geq" | "gt" | "leq" | "lt" => {
                let a = self.expr()?;
                let b = self.expr()?;
                let (lhs, rhs) = if matches!(atom, "geq" | "gt") { (a, b) } else { (b, a) };
                let zeta = if rhs == Expr::Const(0.0) { lhs } else { lhs.sub(rhs) };
                Formula::Pred { zeta, strict: matches!(atom, "gt" | "lt") }
            }
            other => {
                self.pos -= 1;
                return self.error(format!("expected a formula, found `{other}`"));
            }
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let atom = match self.next()? {
            Token::Open => {
                let e = self.expr()?;
                self.expect_close()?;
                return Ok(e);
            }
            Token::Close => {
                self.pos -= 1;
                return self.error("unexpected `)`");
            }
            Token::Atom(a) => a,
        };
        Ok(match atom {
            "abs" => Expr::Abs(Box::new(self.expr()?)),
            "neg" => Expr::Neg(Box::new(self.expr()?)),
            "add" => Expr::Add(Box::new(self.expr()?), Box::new(self.expr()?)),
            "sub" => Expr::Sub(Box::new(self.expr()?), Box::new(self.expr()?)),
            "mul" => Expr::Mul(Box::new(self.expr()?), Box::new(self.expr()?)),
            other => {
                if let Ok(v) = other.parse::<f64>() {
                    if !v.is_finite() {
                        self.pos -= 1;
                        return self.error("non-finite constant");
                    }
                    Expr::Const(v)
                } else if other.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
                    && other.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    Expr::Channel(other.to_string())
                } else {
                    self.pos -= 1;
                    return self.error(format!("expected an expression, found `{other}`"));
                }
            }
        })
    }
}

/// Parses the prefix formula notation.
pub fn parse(src: &str) -> Result<Formula> {
    let mut parser = Parser { tokens: tokenize(src), pos: 0 };
    let f = parser.formula()?;
    if parser.pos != parser.tokens.len() {
        return parser.error("trailing input");
    }
    Ok(f)
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

// ─── Evaluation ──────────────────────────────────────────────────────

enum CExpr {
    Const(f64),
    Channel(ChannelRef),
    Neg(Box<CExpr>),
    Abs(Box<CExpr>),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn eval(&self, traj: &Trajectory, i: usize) -> f64 {
        match self {
            CExpr::Const(v) => *v,
            CExpr::Channel(c) => traj.value(*c, i),
            CExpr::Neg(a) => -a.eval(traj, i),
            CExpr::Abs(a) => a.eval(traj, i).abs(),
            CExpr::Add(a, b) => a.eval(traj, i) + b.eval(traj, i),
            CExpr::Sub(a, b) => a.eval(traj, i) - b.eval(traj, i),
            CExpr::Mul(a, b) => a.eval(traj, i) * b.eval(traj, i),
        }
    }
}

/// Formula with channels resolved and windows converted to sample offsets.
enum Node {
    Const(bool),
    Pred { zeta: CExpr, strict: bool },
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Always { lo: usize, hi: usize, arg: Box<Node> },
    Eventually { lo: usize, hi: usize, arg: Box<Node> },
    Until { lo: usize, hi: usize, lhs: Box<Node>, rhs: Box<Node> },
}

fn compile_expr(e: &Expr, traj: &Trajectory) -> Result<CExpr> {
    Ok(match e {
        Expr::Const(v) => CExpr::Const(*v),
        Expr::Channel(name) => CExpr::Channel(traj.resolve(name)?),
        Expr::Neg(a) => CExpr::Neg(Box::new(compile_expr(a, traj)?)),
        Expr::Abs(a) => CExpr::Abs(Box::new(compile_expr(a, traj)?)),
        Expr::Add(a, b) => CExpr::Add(Box::new(compile_expr(a, traj)?), Box::new(compile_expr(b, traj)?)),
        Expr::Sub(a, b) => CExpr::Sub(Box::new(compile_expr(a, traj)?), Box::new(compile_expr(b, traj)?)),
        Expr::Mul(a, b) => CExpr::Mul(Box::new(compile_expr(a, traj)?), Box::new(compile_expr(b, traj)?)),
    })
}

fn offsets(start: f64, end: f64, h: f64) -> (usize, usize) {
    ((start / h).round() as usize, (end / h).round() as usize)
}

fn compile(f: &Formula, traj: &Trajectory) -> Result<Node> {
    let h = traj.step_h();
    Ok(match f {
        Formula::True => Node::Const(true),
        Formula::False => Node::Const(false),
        Formula::Pred { zeta, strict } => Node::Pred { zeta: compile_expr(zeta, traj)?, strict: *strict },
        Formula::Not(a) => Node::Not(Box::new(compile(a, traj)?)),
        Formula::And(a, b) => Node::And(Box::new(compile(a, traj)?), Box::new(compile(b, traj)?)),
        Formula::Or(a, b) => Node::Or(Box::new(compile(a, traj)?), Box::new(compile(b, traj)?)),
        Formula::Always { start, end, arg } => {
            let (lo, hi) = offsets(*start, *end, h);
            Node::Always { lo, hi, arg: Box::new(compile(arg, traj)?) }
        }
        Formula::Eventually { start, end, arg } => {
            let (lo, hi) = offsets(*start, *end, h);
            Node::Eventually { lo, hi, arg: Box::new(compile(arg, traj)?) }
        }
        Formula::Until { start, end, lhs, rhs } => {
            let (lo, hi) = offsets(*start, *end, h);
            Node::Until { lo, hi, lhs: Box::new(compile(lhs, traj)?), rhs: Box::new(compile(rhs, traj)?) }
        }
    })
}

impl Node {
    fn max_offset(&self) -> usize {
        match self {
            Node::Const(_) | Node::Pred { .. } => 0,
            Node::Not(a) => a.max_offset(),
            Node::And(a, b) | Node::Or(a, b) => a.max_offset().max(b.max_offset()),
            Node::Always { hi, arg, .. } | Node::Eventually { hi, arg, .. } => hi + arg.max_offset(),
            Node::Until { hi, lhs, rhs, .. } => hi + lhs.max_offset().max(rhs.max_offset()),
        }
    }

    fn eval(&self, traj: &Trajectory, i: usize) -> bool {
        match self {
            Node::Const(b) => *b,
            Node::Pred { zeta, strict } => {
                let z = zeta.eval(traj, i);
                if *strict {
                    z > 0.0
                } else {
                    z >= 0.0
                }
            }
            Node::Not(a) => !a.eval(traj, i),
            Node::And(a, b) => a.eval(traj, i) && b.eval(traj, i),
            Node::Or(a, b) => a.eval(traj, i) || b.eval(traj, i),
            Node::Always { lo, hi, arg } => (i + lo..=i + hi).all(|j| arg.eval(traj, j)),
            Node::Eventually { lo, hi, arg } => (i + lo..=i + hi).any(|j| arg.eval(traj, j)),
            Node::Until { lo, hi, lhs, rhs } => {
                for j in i + lo..=i + hi {
                    if rhs.eval(traj, j) {
                        return true;
                    }
                    if !lhs.eval(traj, j) {
                        return false;
                    }
                }
                false
            }
        }
    }
}

/// Whether `traj` satisfies `formula` at time `t`.
pub fn evaluate(formula: &Formula, traj: &Trajectory, t: f64) -> Result<bool> {
    formula.validate()?;
    let node = compile(formula, traj)?;
    let i = traj.index_at(t);
    let last = traj.len() - 1;
    let reach = i + node.max_offset();
    if t < -0.5 * traj.step_h() || reach > last {
        return Err(Error::WindowOutOfRange {
            start: t,
            end: t + formula.horizon(),
            horizon: traj.t_final(),
        });
    }
    Ok(node.eval(traj, i))
}

/// Binary label of a trajectory; diverged trajectories are always unsafe.
pub fn label(formula: &Formula, traj: &Trajectory) -> Result<Label> {
    if traj.diverged() {
        // Still resolve channels so a misconfigured formula is reported.
        compile(formula, traj)?;
        return Ok(Label::Unsafe);
    }
    evaluate(formula, traj, 0.0).map(Label::from_bool)
}

// ─── Built-in requirements ───────────────────────────────────────────

/// How to read a pair of interval-membership `eventually` clauses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reading {
    /// The signal must sit inside the interval at one common instant.
    #[default]
    Prose,
    /// Each bound may be met at a different instant.
    Literal,
}

pub const BUILTIN_NAMES: [&str; 6] = ["phi_bound", "phi1", "phi2", "phi3", "phi", "vdp_roa"];

fn x1() -> Expr {
    Expr::channel("x1")
}

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn interval_reached(start: f64, end: f64, low: f64, high: f64, reading: Reading) -> Formula {
    let above = x1().sub(c(low)).geq_zero();
    let below = c(high).sub(x1()).geq_zero();
    match reading {
        Reading::Prose => Formula::eventually(start, end, Formula::and(above, below)),
        Reading::Literal => {
            Formula::and(Formula::eventually(start, end, above), Formula::eventually(start, end, below))
        }
    }
}

/// Looks up one of the named case-study requirements.
pub fn builtin(name: &str, reading: Reading) -> Result<Formula> {
    Ok(match name {
        "phi_bound" => Formula::always(0.0, 40.0, c(1.0).sub(Expr::channel("e1").abs()).geq_zero()),
        "phi1" => interval_reached(2.0, 3.0, 0.7, 1.3, reading),
        "phi2" => interval_reached(12.0, 13.0, 1.1, 1.7, reading),
        "phi3" => Formula::always(
            22.4,
            22.6,
            Formula::and(x1().add(c(1.6)).geq_zero(), c(-1.2).sub(x1()).geq_zero()),
        ),
        "phi" => Formula::and(
            builtin("phi1", reading)?,
            Formula::and(builtin("phi2", reading)?, builtin("phi3", reading)?),
        ),
        "vdp_roa" => Formula::always(
            30.0,
            30.0,
            Formula::and(
                c(0.5).sub(x1().abs()).gt_zero(),
                c(0.5).sub(Expr::channel("x2").abs()).gt_zero(),
            ),
        ),
        other => return Err(Error::UnknownName { kind: "formula", name: other.to_string() }),
    })
}

/// Resolves a built-in name, falling back to parsing the text as a formula.
pub fn resolve(name_or_dsl: &str, reading: Reading) -> Result<Formula> {
    let trimmed = name_or_dsl.trim();
    if BUILTIN_NAMES.contains(&trimmed) {
        builtin(trimmed, reading)
    } else {
        parse(trimmed)
    }
}
