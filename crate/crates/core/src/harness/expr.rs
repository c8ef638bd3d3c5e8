//! Arithmetic expressions over `x1..xd`, used to write drifts in config files.

use std::fmt;

use crate::dynamics::Drift;
use crate::error::{Error, Result};

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
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn lookup(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based variable index: `x1` is `Var(0)`.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates at `x`. Division by zero and a negative base under a
    /// non-integer power both yield 0 instead of inf/NaN.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(e) => -e.eval(x),
            Expr::Call(f, e) => {
                let v = e.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            0.0
                        } else {
                            a / b
                        }
                    }
                    BinOp::Pow => pow(a, b),
                }
            }
        }
    }

    /// Largest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if a < 0.0 && b.fract() != 0.0 {
        return 0.0;
    }
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        let r = a.powi(b as i32);
        // 0^-n
        return if r.is_infinite() && a == 0.0 { 0.0 } else { r };
    }
    a.powf(b)
}

struct Wrap<'a>(&'a Expr, bool);

impl fmt::Display for Wrap<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Prints with the fewest parentheses that reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "-{}", Wrap(e, e.precedence() < 3)),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(BinOp::Pow, a, b) => {
                write!(
                    f,
                    "{}^{}",
                    Wrap(a, a.precedence() <= 4),
                    Wrap(b, b.precedence() < 3)
                )
            }
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    _ => '/',
                };
                write!(
                    f,
                    "{} {sym} {}",
                    Wrap(a, a.precedence() < p),
                    Wrap(b, b.precedence() <= p)
                )
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.syntax(format!("unexpected `{}`", c as char))),
            None => Err(self.syntax("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(Error::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            }),
        }
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(func) = Func::lookup(name) {
            self.expect(b'(')?;
            let mut args = Vec::new();
            if self.peek() != Some(b')') {
                args.push(self.expr()?);
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
            }
            self.expect(b')')?;
            if args.len() != 1 {
                return Err(Error::Arity {
                    name: name.to_string(),
                    offset: start,
                    found: args.len(),
                });
            }
            return Ok(Expr::Call(func, Box::new(args.pop().unwrap())));
        }
        let index = name
            .strip_prefix('x')
            .filter(|s| !s.starts_with('0'))
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| (1..=self.dim).contains(&i));
        match index {
            Some(i) => Ok(Expr::Var(i - 1)),
            None => Err(Error::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            }),
        }
    }
}

/// Parses `text` with variables `x1..x{dim}`.
pub fn parse_expression(text: &str, dim: usize) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        dim,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

/// One expression per output component.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftExpression {
    dim: usize,
    components: Vec<Expr>,
}

impl DriftExpression {
    pub fn parse<S: AsRef<str>>(texts: &[S], dim: usize) -> Result<Self> {
        if texts.len() != dim {
            return Err(Error::invalid(format!(
                "expected {dim} drift expressions, found {}",
                texts.len()
            )));
        }
        let components = texts
            .iter()
            .map(|t| parse_expression(t.as_ref(), dim))
            .collect::<Result<_>>()?;
        Ok(Self { dim, components })
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }
}

impl Drift for DriftExpression {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.components) {
            *o = e.eval(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(s: &str, x: &[f64]) -> f64 {
        parse_expression(s, x.len().max(1)).unwrap().eval(x)
    }

    #[test]
    fn fixtures() {
        assert_eq!(
            eval("2 + 0.08*x1 - 0.05*sin(x1) + 0.02*cos(x1)^2", &[0.0]),
            2.02
        );
        assert_eq!(eval("x1", &[3.5]), 3.5);
        assert_eq!(eval("2^3^2", &[0.0]), 512.0);
        assert_eq!(eval("-2^2", &[0.0]), -4.0);
        assert_eq!(eval("2^-1", &[0.0]), 0.5);
        assert_eq!(eval("8 - 3 - 2", &[0.0]), 3.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(eval("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(eval(" ( 1+2 )*3 ", &[0.0]), 9.0);
        assert_eq!(eval("1.5e2 + .5", &[0.0]), 150.5);
        assert_eq!(eval("x1*x2 - x2^2", &[3.0, 2.0]), 2.0);
        assert_eq!(eval("exp(0)", &[0.0]), 1.0);
    }

    #[test]
    fn guards() {
        assert_eq!(eval("x1 / 0", &[4.0]), 0.0);
        assert_eq!(eval("(-8)^(1/3)", &[0.0]), 0.0);
        assert_eq!(eval("(-2)^3", &[0.0]), -8.0);
        assert_eq!(eval("0^-1", &[0.0]), 0.0);
    }

    #[test]
    fn errors_report_position() {
        assert!(matches!(
            parse_expression("1 + * 2", 1),
            Err(Error::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse_expression("(1 + 2", 1),
            Err(Error::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            parse_expression("1 2", 1),
            Err(Error::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression("1e999", 1),
            Err(Error::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("2 * x3", 2),
            Err(Error::UnknownIdentifier { ref name, offset: 4 }) if name == "x3"
        ));
        assert!(matches!(
            parse_expression("y", 1),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("x0", 1),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("1 + sin(x1, 2)", 1),
            Err(Error::Arity {
                found: 2,
                offset: 4,
                ..
            })
        ));
        assert!(matches!(
            parse_expression("cos()", 1),
            Err(Error::Arity { found: 0, .. })
        ));
    }

    #[test]
    fn printing() {
        for s in [
            "2^3^2",
            "(2^3)^2",
            "-x1^2",
            "(-x1)^2",
            "1 - (2 - 3)",
            "1 / (2 * x1)",
            "--x1",
            "2^-x1",
        ] {
            let e = parse_expression(s, 1).unwrap();
            assert_eq!(
                parse_expression(&e.to_string(), 1).unwrap(),
                e,
                "{s} -> {e}"
            );
        }
        assert_eq!(
            parse_expression("1-(2-3)", 1).unwrap().to_string(),
            "1.0 - (2.0 - 3.0)"
        );
    }

    #[test]
    fn drift_components() {
        let f = DriftExpression::parse(&["0.4*x1 - 0.1*x1*x2", "-0.8*x2 + 0.2*x1^2"], 2).unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]), vec![0.4 - 0.2, -1.6 + 0.2]);
        assert!(DriftExpression::parse(&["x1"], 2).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp)],
                    inner
                )
                    .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_expression(&text, 3).unwrap(), e);
        }

    }
}
