//! The symbol expression language: a tiny arithmetic grammar over the
//! setting variables, with a precedence-aware printer that round-trips.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Angle on the j-th circle factor (0-based), written `theta{j+1}`.
    Theta(usize),
    /// Real part on the plane/disk, or the coordinate on the line.
    X,
    /// Imaginary part on the plane/disk.
    Y,
    /// `|z|^2` on the plane/disk, `x^2` on the line.
    R2,
    /// Residue on the j-th cyclic factor, written `x{j+1}`.
    Residue(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Exp,
    Log,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Non-negative finite literal; negation is always explicit.
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable values for evaluation. Unused slots may hold anything.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, T> {
    pub theta: &'a [T],
    pub residues: &'a [T],
    pub x: T,
    pub y: T,
    pub r2: T,
}

impl<T: Real> Env<'_, T> {
    pub fn scalar(x: T) -> Env<'static, T> {
        Env {
            theta: &[],
            residues: &[],
            x,
            y: T::zero(),
            r2: x * x,
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        if v < 0.0 {
            Expr::Neg(Box::new(Expr::Num(-v)))
        } else {
            Expr::Num(v)
        }
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn eval<T: Real>(&self, env: &Env<'_, T>) -> T {
        match self {
            Expr::Num(v) => T::lit(*v),
            Expr::Pi => T::PI(),
            Expr::Var(v) => match *v {
                Var::Theta(j) => env.theta.get(j).copied().unwrap_or_else(T::nan),
                Var::Residue(j) => env.residues.get(j).copied().unwrap_or_else(T::nan),
                Var::X => env.x,
                Var::Y => env.y,
                Var::R2 => env.r2,
            },
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env);
                match op {
                    BinOp::Add => x + b.eval(env),
                    BinOp::Sub => x - b.eval(env),
                    BinOp::Mul => x * b.eval(env),
                    BinOp::Div => x / b.eval(env),
                    BinOp::Pow => match b.as_integer() {
                        Some(k) if k.abs() <= i32::MAX as i64 => x.powi(k as i32),
                        _ => x.powf(b.eval(env)),
                    },
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(env);
                match f {
                    Func::Cos => x.cos(),
                    Func::Sin => x.sin(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Abs => x.abs(),
                }
            }
        }
    }

    /// The value of a variable-free subtree, if it is one.
    pub fn as_constant(&self) -> Option<f64> {
        if self.vars().is_empty() {
            Some(self.eval::<f64>(&Env::scalar(0.0)))
        } else {
            None
        }
    }

    fn as_integer(&self) -> Option<i64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Neg(e) => match **e {
                Expr::Num(v) => -v,
                _ => return None,
            },
            _ => return None,
        };
        (v.fract() == 0.0 && v.abs() < 1e15).then_some(v as i64)
    }

    /// Sorted, deduplicated variables referenced by the expression.
    pub fn vars(&self) -> Vec<Var> {
        fn walk(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Num(_) | Expr::Pi => {}
                Expr::Var(v) => out.push(*v),
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    /// Replaces every variable according to `f`.
    pub fn map_vars(&self, f: &impl Fn(Var) -> Expr) -> Expr {
        match self {
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Var(v) => f(*v),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_vars(f))),
            Expr::Call(g, a) => Expr::Call(*g, Box::new(a.map_vars(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => match v {
                Var::Theta(j) => write!(f, "theta{}", j + 1),
                Var::Residue(j) => write!(f, "x{}", j + 1),
                Var::X => write!(f, "x"),
                Var::Y => write!(f, "y"),
                Var::R2 => write!(f, "r2"),
            },
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_at(f, 3)
            }
            Expr::Call(g, a) => {
                write!(f, "{}(", g.name())?;
                a.write_at(f, 0)?;
                write!(f, ")")
            }
            Expr::Bin(op, a, b) => {
                let (sym, l, r) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => (" * ", 2, 3),
                    BinOp::Div => (" / ", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                a.write_at(f, l)?;
                write!(f, "{sym}")?;
                b.write_at(f, r)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &lx.src[start..i];
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    message: format!("malformed number '{text}'"),
                    expected: vec!["number".into()],
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        position: start,
                        message: format!("number '{text}' out of range"),
                        expected: vec!["finite number".into()],
                    });
                }
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..i].to_string()), start));
            } else if "+-*/^()".contains(c) {
                lx.toks.push((Tok::Op(c), i));
                i += 1;
            } else {
                return Err(Error::Parse {
                    position: i,
                    message: format!("unexpected character '{c}'"),
                    expected: vec!["number".into(), "identifier".into(), "operator".into()],
                });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const OPERAND: &[&str] = &["number", "identifier", "(", "-"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> usize {
        self.toks[self.pos].1
    }

    fn error<X>(&self, message: impl Into<String>, expected: &[&str]) -> Result<X> {
        Err(Error::Parse {
            position: self.at(),
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::End => "end of input".into(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Tok::Op('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let position = self.at();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != &Tok::Op(')') {
                    return self.error(format!("expected ')' but found {}", self.describe()), &[")", "operator"]);
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != &Tok::Op('(') {
                        return self.error(format!("expected '(' after '{name}' but found {}", self.describe()), &["("]);
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != &Tok::Op(')') {
                        return self.error(format!("expected ')' but found {}", self.describe()), &[")", "operator"]);
                    }
                    self.pos += 1;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                identifier(&name, position)
            }
            _ => self.error(format!("expected an operand but found {}", self.describe()), OPERAND),
        }
    }
}

fn indexed(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    let k: usize = rest.parse().ok()?;
    (k >= 1 && !rest.starts_with('0')).then(|| k - 1)
}

fn identifier(name: &str, position: usize) -> Result<Expr> {
    Ok(match name {
        "pi" => Expr::Pi,
        "theta" => Expr::Var(Var::Theta(0)),
        "x" => Expr::Var(Var::X),
        "y" => Expr::Var(Var::Y),
        "r2" => Expr::Var(Var::R2),
        "i" | "I" => {
            return Err(Error::NonReal(format!(
                "imaginary unit at position {position}: symbols must be real-valued"
            )))
        }
        _ => {
            if let Some(j) = indexed(name, "theta") {
                Expr::Var(Var::Theta(j))
            } else if let Some(j) = indexed(name, "x") {
                Expr::Var(Var::Residue(j))
            } else {
                return Err(Error::UnknownIdentifier {
                    name: name.to_string(),
                    position,
                });
            }
        }
    })
}

/// Parses an expression of the symbol grammar.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return p.error(
            format!("unexpected {} after complete expression", p.describe()),
            &["operator", "end of input"],
        );
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64) -> f64 {
        parse_expr(s).unwrap().eval(&Env::scalar(x))
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0), -4.0);
        assert_eq!(ev("2 ^ -1", 0.0), 0.5);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0), -4.0);
        assert!((ev("exp(-x^2)", 1.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(ev("1e-3 * 2E2", 0.0), 0.2);
    }

    #[test]
    fn negative_base_with_integer_power() {
        assert_eq!(ev("x^3", -2.0), -8.0);
        assert_eq!(ev("(1 - r2)^2", 3.0), 64.0);
    }

    #[test]
    fn errors_carry_position_and_expectation() {
        match parse_expr("2 + * 3") {
            Err(Error::Parse { position, expected, .. }) => {
                assert_eq!(position, 4);
                assert!(expected.contains(&"number".to_string()));
            }
            other => panic!("{other:?}"),
        }
        match parse_expr("cos(theta1") {
            Err(Error::Parse { position, expected, .. }) => {
                assert_eq!(position, 10);
                assert_eq!(expected[0], ")");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("2 + foo"), Err(Error::UnknownIdentifier { position: 4, .. })));
        assert!(matches!(parse_expr("1 + i"), Err(Error::NonReal(_))));
        assert!(matches!(parse_expr("1 2"), Err(Error::Parse { position: 2, .. })));
        assert!(matches!(parse_expr("theta0"), Err(Error::UnknownIdentifier { .. })));
    }

    #[test]
    fn printer_round_trips() {
        for s in [
            "2 + cos(theta1)",
            "(1 - r2)^2",
            "-(x + 1) * y / (2 - x)",
            "2^3^2",
            "(2^3)^2",
        ] {
            let e = parse_expr(s).unwrap();
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{s} -> {printed}");
        }
        assert_eq!(parse_expr("theta").unwrap().to_string(), "theta1");
    }
}
