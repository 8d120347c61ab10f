//! A small expression language for user-defined coefficients.
//!
//! Variables are `t`, `x`, `xd`, `v`, `vd` and the constant `pi`. Operators
//! are `+ - * / ^` with the usual precedence (`^` binds tightest and is right
//! associative). Functions: `sin`, `cos`, `tanh`, `atan`, `exp`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coefficients, DeclaredBounds, Jet, Point, TerminalJet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    T,
    X,
    Xd,
    V,
    Vd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tanh,
    Atan,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, at: &Point) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(v) => match v {
                Var::T => at.t,
                Var::X => at.x,
                Var::Xd => at.xd,
                Var::V => at.v,
                Var::Vd => at.vd,
            },
            Node::Neg(a) => -a.eval(at),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(at), b.eval(at));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(at);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Atan => a.atan(),
                    Func::Exp => a.exp(),
                }
            }
        }
    }
}

/// A parsed expression in `t, x, xd, v, vd`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn zero() -> Self {
        Expr {
            source: "0".into(),
            root: Node::Const(0.0),
        }
    }

    pub fn eval(&self, at: &Point) -> f64 {
        self.root.eval(at)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Expression {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Const).map_err(|_| Error::Expression {
            column: start + 1,
            message: format!("invalid number `{text}`"),
        })
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tanh" => Some(Func::Tanh),
            "atan" => Some(Func::Atan),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(f) = func {
            if !self.eat(b'(') {
                return Err(self.error(format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Node::Call(f, Box::new(arg)));
        }
        let var = match name {
            "t" => Var::T,
            "x" => Var::X,
            "xd" => Var::Xd,
            "v" => Var::V,
            "vd" => Var::Vd,
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            _ => {
                return Err(Error::Expression {
                    column: start + 1,
                    message: format!("unknown identifier `{name}`"),
                })
            }
        };
        Ok(Node::Var(var))
    }
}

/// Source strings for one coefficient and its declared derivatives.
/// Omitted derivatives are declared as zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetSource {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dxd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dxx: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dxxd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dxdxd: Option<String>,
}

/// Source strings for `h` and its derivatives in `x`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSource {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dxx: Option<String>,
}

/// User-defined coefficients as text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprSource {
    pub drift: JetSource,
    pub diffusion: JetSource,
    pub running_cost: JetSource,
    pub terminal_cost: TerminalSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_xd_lower: Option<f64>,
}

#[derive(Debug, Clone)]
struct JetExpr([Expr; 6]);

impl JetExpr {
    fn parse(src: &JetSource, field: &str) -> Result<Self> {
        let one = |s: &Option<String>, name: &str| -> Result<Expr> {
            match s {
                None => Ok(Expr::zero()),
                Some(s) => Expr::parse(s).map_err(|e| annotate(e, &format!("{field}.{name}"))),
            }
        };
        Ok(JetExpr([
            Expr::parse(&src.value).map_err(|e| annotate(e, &format!("{field}.value")))?,
            one(&src.dx, "dx")?,
            one(&src.dxd, "dxd")?,
            one(&src.dxx, "dxx")?,
            one(&src.dxxd, "dxxd")?,
            one(&src.dxdxd, "dxdxd")?,
        ]))
    }

    fn eval(&self, at: &Point) -> Jet {
        let e = &self.0;
        Jet {
            value: e[0].eval(at),
            dx: e[1].eval(at),
            dxd: e[2].eval(at),
            dxx: e[3].eval(at),
            dxxd: e[4].eval(at),
            dxdxd: e[5].eval(at),
        }
    }
}

fn annotate(err: Error, field: &str) -> Error {
    match err {
        Error::Expression { column, message } => Error::Expression {
            column,
            message: format!("{field}: {message}"),
        },
        other => other,
    }
}

/// Coefficients given by parsed expressions. Declared derivatives are not
/// trusted; run [`crate::model::check_derivatives`] before use.
#[derive(Debug, Clone)]
pub struct ExprCoefficients {
    source: ExprSource,
    drift: JetExpr,
    diffusion: JetExpr,
    cost: JetExpr,
    terminal: [Expr; 3],
}

impl ExprCoefficients {
    pub fn new(source: ExprSource) -> Result<Self> {
        let term = |s: &Option<String>, name: &str| -> Result<Expr> {
            match s {
                None => Ok(Expr::zero()),
                Some(s) => Expr::parse(s).map_err(|e| annotate(e, &format!("terminal_cost.{name}"))),
            }
        };
        let terminal = [
            Expr::parse(&source.terminal_cost.value).map_err(|e| annotate(e, "terminal_cost.value"))?,
            term(&source.terminal_cost.dx, "dx")?,
            term(&source.terminal_cost.dxx, "dxx")?,
        ];
        for (name, e) in ["value", "dx", "dxx"].iter().zip(&terminal) {
            if uses_non_state(&e.root) {
                return Err(Error::config(
                    format!("terminal_cost.{name}"),
                    "terminal cost may only depend on `x`",
                ));
            }
        }
        Ok(ExprCoefficients {
            drift: JetExpr::parse(&source.drift, "drift")?,
            diffusion: JetExpr::parse(&source.diffusion, "diffusion")?,
            cost: JetExpr::parse(&source.running_cost, "running_cost")?,
            terminal,
            source,
        })
    }

    pub fn source(&self) -> &ExprSource {
        &self.source
    }
}

fn uses_non_state(n: &Node) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var(v) => *v != Var::X,
        Node::Neg(a) | Node::Call(_, a) => uses_non_state(a),
        Node::Bin(_, a, b) => uses_non_state(a) || uses_non_state(b),
    }
}

impl Coefficients for ExprCoefficients {
    fn name(&self) -> &str {
        "expression"
    }

    fn drift(&self, at: &Point) -> Jet {
        self.drift.eval(at)
    }

    fn diffusion(&self, at: &Point) -> Jet {
        self.diffusion.eval(at)
    }

    fn running_cost(&self, at: &Point) -> Jet {
        self.cost.eval(at)
    }

    fn terminal_cost(&self, x: f64) -> TerminalJet {
        let at = Point {
            x,
            ..Point::default()
        };
        TerminalJet {
            value: self.terminal[0].eval(&at),
            dx: self.terminal[1].eval(&at),
            dxx: self.terminal[2].eval(&at),
        }
    }

    fn drift_value(&self, at: &Point) -> f64 {
        self.drift.0[0].eval(at)
    }

    fn diffusion_value(&self, at: &Point) -> f64 {
        self.diffusion.0[0].eval(at)
    }

    fn running_cost_value(&self, at: &Point) -> f64 {
        self.cost.0[0].eval(at)
    }

    fn bounds(&self) -> DeclaredBounds {
        DeclaredBounds {
            derivative: self.source.derivative_bound,
            sigma_xd_lower: self.source.sigma_xd_lower,
        }
    }
}
