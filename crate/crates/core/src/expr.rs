//! Arithmetic expressions in the single spatial variable `x`.
//!
//! Grammar (recursive descent, one token of lookahead):
//!
//! ```text
//! expr    := term (('+'|'-') term)*
//! term    := factor (('*'|'/') factor)*
//! factor  := unary ('^' factor)?          // '^' is right associative
//! unary   := '-'? primary
//! primary := number | 'x' | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp' | 'log'
//! ```
//!
//! Numbers are decimal with an optional exponent part. A leading minus on a
//! numeric literal is folded into the literal so printing round-trips to an
//! identical tree.

use crate::error::{CoreError, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    /// Evaluate at a point. Division by zero and log of a non-positive
    /// argument yield non-finite values caught by callers that sample grids.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
            Expr::Exp(e) => e.eval(x).exp(),
            Expr::Log(e) => e.eval(x).ln(),
        }
    }

    /// Evaluate, failing on a non-finite result.
    pub fn eval_checked(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CoreError::NonFinite { x, detail: format!("expression `{self}` -> {v}") })
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var | Expr::Sin(_) | Expr::Cos(_) | Expr::Exp(_)
            | Expr::Log(_) => 5,
        }
    }
}

/// Printer producing input the parser maps back to the identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Wrap `e` in parentheses when its precedence is below `min`.
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "(")?;
                fmt::Display::fmt(e, f)?;
                write!(f, ")")
            } else {
                fmt::Display::fmt(e, f)
            }
        }
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    // prints like a unary minus; the parser folds it back into the literal
                    write!(f, "-{}", -*v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var => write!(f, "x"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                // operand of unary minus must be a primary ("--x" does not parse)
                child(f, e, 5)
            }
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                // right operand needs parens at equal precedence (left associativity)
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            Expr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            Expr::Pow(a, b) => {
                // the base slot is a unary, so a nested Pow needs parentheses
                // ('^' is right associative); the exponent slot is a factor
                if matches!(**a, Expr::Pow(..)) {
                    write!(f, "(")?;
                    fmt::Display::fmt(a, f)?;
                    write!(f, ")")?;
                } else {
                    child(f, a, 3)?;
                }
                write!(f, "^")?;
                child(f, b, 3)
            }
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
            Expr::Log(e) => write!(f, "log({e})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(CoreError::Parse { offset: self.pos, message: message.into() })
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.factor()?;
                lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'/') {
                let rhs = self.factor()?;
                lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.eat(b'^') {
            let exponent = self.factor()?;
            Ok(Expr::Pow(Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.primary()?;
            // fold -literal so print/parse round-trips to the identical tree
            if let Expr::Num(v) = inner {
                Ok(Expr::Num(-v))
            } else {
                Ok(Expr::Neg(Box::new(inner)))
            }
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .map_or(false, |b| b.is_ascii_alphanumeric() || *b == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match name {
                    "x" => Ok(Expr::Var),
                    "sin" | "cos" | "exp" | "log" => {
                        self.expect(b'(')?;
                        let arg = Box::new(self.expr()?);
                        self.expect(b')')?;
                        Ok(match name {
                            "sin" => Expr::Sin(arg),
                            "cos" => Expr::Cos(arg),
                            "exp" => Expr::Exp(arg),
                            _ => Expr::Log(arg),
                        })
                    }
                    _ => {
                        self.pos = start;
                        self.err(format!("unknown identifier `{name}`"))
                    }
                }
            }
            Some(c) => self.err(format!("unexpected character `{}`", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.src.get(self.pos).map_or(false, |b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.src.get(self.pos).map_or(false, |b| b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).map_or(false, |b| b.is_ascii_digit()) {
                while self.src.get(self.pos).map_or(false, |b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all (e.g. `2*exp(x)` tokenized mid-way)
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("invalid number `{text}`"))
            }
        }
    }
}

/// Parse an expression over `x`. Errors carry the byte offset of the failure.
pub fn parse_expr(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(CoreError::Parse { offset: 0, message: "empty expression".into() });
    }
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    #[test]
    fn literal() {
        assert_eq!(parse_expr("1").unwrap(), Expr::Num(1.0));
    }

    #[test]
    fn grammar_case() {
        let e = parse_expr("1 + 0.5*x").unwrap();
        assert_eq!(e, Expr::Add(n(1.0), Box::new(Expr::Mul(n(0.5), Box::new(Expr::Var)))));
    }

    #[test]
    fn exp_at_one() {
        let e = parse_expr("exp(x)").unwrap();
        assert_eq!(e, Expr::Exp(Box::new(Expr::Var)));
        assert!((e.eval(1.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        // left associativity: 1 - 2 - 3 = (1-2)-3
        assert_eq!(parse_expr("1-2-3").unwrap().eval(0.0), -4.0);
        // * binds tighter than +
        assert_eq!(parse_expr("2+3*4").unwrap().eval(0.0), 14.0);
        // ^ is right associative: 2^3^2 = 2^9
        assert_eq!(parse_expr("2^3^2").unwrap().eval(0.0), 512.0);
        // grammar puts unary minus inside the power base: (-2)^2 = 4
        assert_eq!(parse_expr("-2^2").unwrap().eval(0.0), 4.0);
    }

    #[test]
    fn exponent_numbers() {
        assert_eq!(parse_expr("1e3").unwrap().eval(0.0), 1000.0);
        assert_eq!(parse_expr("2.5E-2").unwrap().eval(0.0), 0.025);
    }

    #[test]
    fn syntax_error_offset() {
        match parse_expr("1 + * 2") {
            Err(CoreError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        match parse_expr("2*y") {
            Err(CoreError::Parse { offset, message }) => {
                assert_eq!(offset, 2);
                assert!(message.contains("unknown identifier"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_spot_checks() {
        for s in [
            "1 + 0.5*x",
            "-x^2",
            "(1 + x)*(2 - x)",
            "sin(3.14159*x)/x",
            "exp(-(x - 0.5)^2)",
            "1/(1 + exp(-x))",
            "2^x^2",
            "1 - (2 - 3)",
            "x/(2*x)/3",
        ] {
            let e = parse_expr(s).unwrap();
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            assert_eq!(e, reparsed, "round-trip failed for `{s}` -> `{printed}`");
        }
    }
}
