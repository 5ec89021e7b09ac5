//! Scalar expression language for coefficient fields.
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^-1` is `0.5`. Variables are `x`, `y`, `z`; constants
//! `pi` and `e`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Z => 2,
        }
    }

    fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
    Pow,
}

impl Func {
    const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
        Func::Min,
        Func::Max,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax { offset: usize, expected: Vec<String>, found: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity { offset: usize, name: String, expected: usize, found: usize },
}

impl ParseError {
    /// 1-based byte offset of the error.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdent { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error evaluating `{expr}` at {point:?}")]
    Domain { expr: String, point: Vec<f64> },
    #[error("variable `{var}` needs coordinate {index} but the point has {dim}")]
    MissingCoordinate { var: &'static str, index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => out.push((Tok::Star, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b',' => out.push((Tok::Comma, start)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start + 1,
                    expected: vec!["number".into()],
                    found: format!("`{text}`"),
                })?;
                out.push((Tok::Num(v), start));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(src[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap();
                return Err(ParseError::Syntax {
                    offset: start + 1,
                    expected: vec!["expression".into()],
                    found: format!("character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const ATOM_START: [&str; 3] = ["number", "identifier", "`(`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1 + 1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.fail(&["`)`", "operator"]);
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let Some(func) = Func::lookup(&name) else {
                        return Err(ParseError::UnknownIdent { offset, name });
                    };
                    self.bump();
                    let mut args = vec![self.expr()?];
                    loop {
                        match self.peek() {
                            Tok::Comma => {
                                self.bump();
                                args.push(self.expr()?);
                            }
                            Tok::RParen => {
                                self.bump();
                                break;
                            }
                            _ => return self.fail(&["`,`", "`)`", "operator"]),
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            offset,
                            name,
                            expected: func.arity(),
                            found: args.len(),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "z" => Ok(Expr::Var(Var::Z)),
                    "pi" => Ok(Expr::Const(Constant::Pi)),
                    "e" => Ok(Expr::Const(Constant::E)),
                    _ => match Func::lookup(&name) {
                        // a known function used without its argument list
                        Some(_) => self.fail(&["`(`"]),
                        None => Err(ParseError::UnknownIdent { offset, name }),
                    },
                }
            }
            _ => self.fail(&ATOM_START),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(&["operator", "end of input"]);
    }
    Ok(e)
}

fn real_pow(base: f64, exp: f64) -> Option<f64> {
    if base < 0.0 && exp.fract() != 0.0 {
        return None;
    }
    Some(base.powf(exp))
}

impl Expr {
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Const(Constant::Pi) => std::f64::consts::PI,
            Expr::Const(Constant::E) => std::f64::consts::E,
            Expr::Var(var) => {
                let i = var.index();
                return point.get(i).copied().ok_or(EvalError::MissingCoordinate {
                    var: var.name(),
                    index: i,
                    dim: point.len(),
                });
            }
            Expr::Neg(e) => -e.eval(point)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(point)?;
                let b = b.eval(point)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => real_pow(a, b).ok_or_else(|| self.domain(point))?,
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(point)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Log if a <= 0.0 => return Err(self.domain(point)),
                    Func::Log => a.ln(),
                    Func::Sqrt if a < 0.0 => return Err(self.domain(point)),
                    Func::Sqrt => a.sqrt(),
                    Func::Min => a.min(args[1].eval(point)?),
                    Func::Max => a.max(args[1].eval(point)?),
                    Func::Pow => {
                        let b = args[1].eval(point)?;
                        real_pow(a, b).ok_or_else(|| self.domain(point))?
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain(point))
        }
    }

    fn domain(&self, point: &[f64]) -> EvalError {
        EvalError::Domain { expr: self.to_string(), point: point.to_vec() }
    }

    /// Highest variable index referenced plus one (0 for constant expressions).
    pub fn dims_used(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Const(_) => 0,
            Expr::Var(v) => v.index() + 1,
            Expr::Neg(e) => e.dims_used(),
            Expr::Bin(_, a, b) => a.dims_used().max(b.dims_used()),
            Expr::Call(_, args) => args.iter().map(Expr::dims_used).max().unwrap_or(0),
        }
    }

    fn level(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Const(Constant::Pi) => write!(f, "pi"),
            Expr::Const(Constant::E) => write!(f, "e"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, e.level() < 3)
            }
            Expr::Bin(BinOp::Pow, a, b) => {
                write_child(f, a, a.level() < 5)?;
                write!(f, "^")?;
                write_child(f, b, b.level() < 3)
            }
            Expr::Bin(op, a, b) => {
                let lvl = self.level();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => unreachable!(),
                };
                write_child(f, a, a.level() < lvl)?;
                write!(f, " {sym} ")?;
                write_child(f, b, b.level() <= lvl)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub src: String,
    pub expr: Expr,
}

impl ScalarField {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        Ok(ScalarField { src: src.to_string(), expr: parse(src)? })
    }

    pub fn constant(v: f64) -> Self {
        ScalarField { src: format!("{v:?}"), expr: Expr::Num(v) }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(point)
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self.expr, Expr::Num(v) if v == 0.0)
    }
}

/// Random expression tree of at most `depth` levels over the variables `x`..`dims`.
///
/// Numbers are non-negative (a leading minus is always a `Neg` node) and are
/// drawn so that their shortest decimal form reparses to the same value.
pub fn random_expr<R: rand::Rng + ?Sized>(rng: &mut R, depth: usize, dims: usize) -> Expr {
    let vars = [Var::X, Var::Y, Var::Z];
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 => Expr::Num(rng.gen_range(0..1000) as f64 / 8.0),
            1 => Expr::Num(rng.gen::<f64>() * 10f64.powi(rng.gen_range(-5..6))),
            2 if dims > 0 => Expr::Var(vars[rng.gen_range(0..dims.min(3))]),
            _ => Expr::Const(if rng.gen_bool(0.5) { Constant::Pi } else { Constant::E }),
        };
    }
    let sub = |rng: &mut R| Box::new(random_expr(rng, depth - 1, dims));
    match rng.gen_range(0..8) {
        0 => Expr::Neg(sub(rng)),
        1..=5 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][rng.gen_range(0..5)];
            Expr::Bin(op, sub(rng), sub(rng))
        }
        _ => {
            let f = Func::ALL[rng.gen_range(0..Func::ALL.len())];
            Expr::Call(f, (0..f.arity()).map(|_| random_expr(rng, depth - 1, dims)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, p: &[f64]) -> f64 {
        parse(src).unwrap().eval(p).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(ev("1/(1+x^2)", &[1.0]), 0.5);
        assert!((ev("sin(pi*x)^2", &[0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(ev("min(x, 1-x)", &[0.3]), 0.3);
        assert_eq!(ev("2*x - y", &[3.0, 1.0]), 5.0);
        assert_eq!(ev("-x^2", &[2.0]), -4.0);
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("pow(2, 10) + max(1, e)", &[]), 1024.0 + std::f64::consts::E);
        assert_eq!(ev(" 1.5e2 *  .5 ", &[]), 75.0);
    }

    #[test]
    fn domain_errors() {
        let e = parse("log(x)").unwrap();
        assert!(matches!(e.eval(&[-1.0]), Err(EvalError::Domain { .. })));
        assert!(matches!(parse("sqrt(x - 2)").unwrap().eval(&[1.0]), Err(EvalError::Domain { .. })));
        assert!(matches!(parse("x^0.5").unwrap().eval(&[-1.0]), Err(EvalError::Domain { .. })));
        assert_eq!(ev("x^3", &[-2.0]), -8.0);
        assert!(matches!(parse("1/x").unwrap().eval(&[0.0]), Err(EvalError::Domain { .. })));
        assert!(matches!(
            parse("y").unwrap().eval(&[1.0]),
            Err(EvalError::MissingCoordinate { index: 1, .. })
        ));
        if let Err(EvalError::Domain { expr, .. }) = parse("1 + log(x)").unwrap().eval(&[0.0]) {
            assert_eq!(expr, "log(x)");
        } else {
            panic!("expected domain error");
        }
    }

    #[test]
    fn positioned_syntax_errors() {
        let err = parse("2x").unwrap_err();
        assert_eq!(err.offset(), 2);
        let err = parse("1 + ").unwrap_err();
        assert_eq!(err.offset(), 5);
        match parse("(1 + 2").unwrap_err() {
            ParseError::Syntax { offset, expected, .. } => {
                assert_eq!(offset, 7);
                assert!(expected.contains(&"`)`".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("foo + 1").unwrap_err(), ParseError::UnknownIdent { offset: 1, .. }));
        assert!(matches!(parse("1 + bar(2)").unwrap_err(), ParseError::UnknownIdent { offset: 5, .. }));
        assert!(matches!(
            parse("min(1)").unwrap_err(),
            ParseError::Arity { offset: 1, expected: 2, found: 1, .. }
        ));
        assert!(matches!(parse("sin(1, 2)").unwrap_err(), ParseError::Arity { .. }));
        assert_eq!(parse("1 $ 2").unwrap_err().offset(), 3);
        assert_eq!(parse("sin + 1").unwrap_err().offset(), 5);
    }

    #[test]
    fn printing_keeps_structure() {
        for src in ["-x^2", "(-x)^2", "a", "1 - (2 - 3)", "(1 - 2) - 3", "2^3^2", "(2^3)^2", "x*-y", "--x", "2^-x^2"] {
            let Ok(e) = parse(src) else { continue };
            let again = parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
        assert_eq!(parse("(1 - 2) - 3").unwrap().to_string(), "1.0 - 2.0 - 3.0");
    }

    #[test]
    fn random_trees_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..2000 {
            let e = random_expr(&mut rng, 6, 3);
            let text = e.to_string();
            let again = parse(&text).unwrap_or_else(|err| panic!("{text}: {err}"));
            assert_eq!(e, again, "{text}");
        }
    }
}
