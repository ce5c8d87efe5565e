//! Arithmetic expressions in one variable, used for user-supplied
//! coefficient functions and initial profiles.
//!
//! Supported: `+ - * / ^`, parentheses, one named variable, the constant
//! `pi` and the functions `sin`, `cos`, `exp`, `log`. Evaluation follows
//! IEEE semantics; domain violations surface as non-finite values which
//! callers check where it matters.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `text` with `var` as the only admissible variable name.
    pub fn parse(text: &str, var: &str) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            var,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input at offset {}",
                p.offset()
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var => v,
            Expr::Neg(a) => -a.eval(v),
            Expr::Add(a, b) => a.eval(v) + b.eval(v),
            Expr::Sub(a, b) => a.eval(v) - b.eval(v),
            Expr::Mul(a, b) => a.eval(v) * b.eval(v),
            Expr::Div(a, b) => a.eval(v) / b.eval(v),
            Expr::Pow(a, b) => a.eval(v).powf(b.eval(v)),
            Expr::Call(f, a) => {
                let x = a.eval(v);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                }
            }
        }
    }

    /// Value of a variable-free expression, `None` if the variable occurs.
    pub fn as_constant(&self) -> Option<f64> {
        if self.uses_var() {
            None
        } else {
            Some(self.eval(f64::NAN))
        }
    }

    fn uses_var(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses_var() || b.uses_var(),
        }
    }
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
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                toks.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                toks.push((i, Tok::Star));
                i += 1;
            }
            '/' => {
                toks.push((i, Tok::Slash));
                i += 1;
            }
            '^' => {
                toks.push((i, Tok::Caret));
                i += 1;
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part, e.g. 1e-5
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| {
                    Error::Expr(format!("bad number literal '{s}' at offset {start}"))
                })?;
                toks.push((start, Tok::Num(v)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(Error::Expr(format!(
                    "unexpected character '{c}' at offset {i}"
                )))
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    var: &'a str,
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.0).unwrap_or(usize::MAX)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            // right associative, exponent may carry a sign: 2^-3
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let off = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Expr(format!("missing ')' at offset {off}"))),
                }
            }
            Some(Tok::Ident(name)) => {
                if name == self.var {
                    return Ok(Expr::Var);
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                let f = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    _ => {
                        return Err(Error::Expr(format!(
                            "unknown identifier '{name}' (variable is '{}')",
                            self.var
                        )))
                    }
                };
                match self.bump() {
                    Some(Tok::LParen) => {}
                    _ => {
                        return Err(Error::Expr(format!(
                            "function '{name}' needs parenthesized argument"
                        )))
                    }
                }
                let arg = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(Expr::Call(f, Box::new(arg))),
                    _ => Err(Error::Expr(format!("missing ')' after '{name}('"))),
                }
            }
            _ => Err(Error::Expr("unexpected end of expression".into())),
        }
    }
}

/// A scalar function of one real variable. Presets use closures, user
/// models and initial profiles use parsed expressions.
#[derive(Clone)]
pub enum ScalarFn {
    Const(f64),
    Parsed(Arc<Expr>),
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ScalarFn {
    pub fn parse(text: &str, var: &str) -> Result<ScalarFn> {
        let e = Expr::parse(text, var)?;
        match e.as_constant() {
            Some(c) => Ok(ScalarFn::Const(c)),
            None => Ok(ScalarFn::Parsed(Arc::new(e))),
        }
    }

    pub fn closure(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
        ScalarFn::Closure(Arc::new(f))
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            ScalarFn::Const(c) => *c,
            ScalarFn::Parsed(e) => e.eval(v),
            ScalarFn::Closure(f) => f(v),
        }
    }

    pub fn is_const_zero(&self) -> bool {
        matches!(self, ScalarFn::Const(c) if *c == 0.0)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Const(c) => write!(f, "Const({c})"),
            ScalarFn::Parsed(e) => write!(f, "Parsed({e:?})"),
            ScalarFn::Closure(_) => write!(f, "Closure(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: f64) -> f64 {
        Expr::parse(text, "x").unwrap().eval(x)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("(1+2)*3", 0.0), 9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0); // right associative
        assert_eq!(ev("-2^2", 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("6/3/2", 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0), -4.0);
    }

    #[test]
    fn numbers() {
        assert_eq!(ev("1e-5", 0.0), 1e-5);
        assert_eq!(ev("2.5E2", 0.0), 250.0);
        assert_eq!(ev(".5", 0.0), 0.5);
    }

    #[test]
    fn functions_and_vars() {
        assert!((ev("sin(pi/2)", 0.0) - 1.0).abs() < 1e-15);
        assert!((ev("cos(0)", 0.0) - 1.0).abs() < 1e-15);
        assert!((ev("exp(log(3))", 0.0) - 3.0).abs() < 1e-14);
        assert_eq!(ev("x*x+1", 2.0), 5.0);
        let e = Expr::parse("0.1*(1-s)", "s").unwrap();
        assert!((e.eval(0.25) - 0.075).abs() < 1e-16);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1+", "x").is_err());
        assert!(Expr::parse("foo(1)", "x").is_err());
        assert!(Expr::parse("y+1", "x").is_err());
        assert!(Expr::parse("(1", "x").is_err());
        assert!(Expr::parse("1 2", "x").is_err());
        assert!(Expr::parse("sin 3", "x").is_err());
        assert!(Expr::parse("1..2", "x").is_err());
    }

    #[test]
    fn constant_folding() {
        let f = ScalarFn::parse("2*pi/2-pi", "s").unwrap();
        assert!(f.is_const_zero());
        assert_eq!(ScalarFn::parse("s", "s").unwrap().as_const(), None);
    }

    impl ScalarFn {
        fn as_const(&self) -> Option<f64> {
            match self {
                ScalarFn::Const(c) => Some(*c),
                _ => None,
            }
        }
    }

    #[test]
    fn log_of_negative_is_nan() {
        assert!(ev("log(0-1)", 0.0).is_nan());
    }
}
