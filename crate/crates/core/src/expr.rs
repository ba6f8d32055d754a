//! Expression language for custom operators and analytic fields.
//!
//! The grammar is documented in `docs/expression-grammar.md`. Variables use
//! one-based indices as written (`r_12`, `x_1`); the tree stores them
//! zero-based.

use crate::scalar::Scalar;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    R(usize, usize),
    P(usize),
    X(usize),
    U,
    T,
    /// Placeholder argument `a_i` of a composition.
    Arg(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// `σ_k` of the current matrix argument.
    Sigma(usize),
    /// Evaluates the inner expression with the matrix argument replaced by
    /// `r + E` (`E` row-major).
    Shifted(Box<Expr>, Vec<f64>),
}

/// Values of the variables an expression may reference.
#[derive(Clone, Copy, Debug)]
pub struct Ctx<'a, S> {
    pub n: usize,
    pub r: &'a [S],
    pub p: &'a [S],
    pub u: S,
    pub x: &'a [S],
    pub t: S,
    pub args: &'a [S],
}

/// Which variable groups an expression reads, and the largest index used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Usage {
    pub r: bool,
    pub p: bool,
    pub u: bool,
    pub x: bool,
    pub t: bool,
    /// `1 + max` vector index seen in `p_i`, `x_i`, `r_ij`; 0 when none.
    pub dim: usize,
    pub args: usize,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<S: Scalar>(&self, c: &Ctx<S>) -> S {
        use Expr::*;
        match self {
            Num(v) => S::cst(*v),
            R(i, j) => c.r[i * c.n + j],
            P(i) => c.p[*i],
            X(i) => c.x[*i],
            U => c.u,
            T => c.t,
            Arg(i) => c.args[*i],
            Neg(a) => -a.eval(c),
            Add(a, b) => a.eval(c) + b.eval(c),
            Sub(a, b) => a.eval(c) - b.eval(c),
            Mul(a, b) => a.eval(c) * b.eval(c),
            Div(a, b) => a.eval(c) / b.eval(c),
            Pow(a, b) => a.eval(c).pow(b.eval(c)),
            Call(Func::Exp, a) => a.eval(c).exp(),
            Call(Func::Log, a) => a.eval(c).ln(),
            Call(Func::Sqrt, a) => a.eval(c).sqrt(),
            Sigma(k) => S::elem_sym_matrix(*k, c.r, c.n),
            Shifted(inner, e) => {
                let r: Vec<S> = c.r.iter().zip(e).map(|(&a, &b)| a + S::cst(b)).collect();
                inner.eval(&Ctx { r: &r, ..*c })
            }
        }
    }

    pub fn usage(&self) -> Usage {
        let mut u = Usage::default();
        self.visit(&mut |e| match e {
            Expr::R(i, j) => {
                u.r = true;
                u.dim = u.dim.max(i.max(j) + 1);
            }
            Expr::Sigma(_) => u.r = true,
            Expr::P(i) => {
                u.p = true;
                u.dim = u.dim.max(i + 1);
            }
            Expr::X(i) => {
                u.x = true;
                u.dim = u.dim.max(i + 1);
            }
            Expr::U => u.u = true,
            Expr::T => u.t = true,
            Expr::Arg(i) => u.args = u.args.max(i + 1),
            _ => {}
        });
        u
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        use Expr::*;
        f(self);
        match self {
            Neg(a) | Call(_, a) | Shifted(a, _) => a.visit(f),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Replaces each `a_i` by `args[i]`.
    pub fn substitute_args(&self, args: &[Expr]) -> Expr {
        use Expr::*;
        let s = |e: &Expr| Box::new(e.substitute_args(args));
        match self {
            Arg(i) => args.get(*i).cloned().unwrap_or(Arg(*i)),
            Neg(a) => Neg(s(a)),
            Call(g, a) => Call(*g, s(a)),
            Shifted(a, e) => Shifted(s(a), e.clone()),
            Add(a, b) => Add(s(a), s(b)),
            Sub(a, b) => Sub(s(a), s(b)),
            Mul(a, b) => Mul(s(a), s(b)),
            Div(a, b) => Div(s(a), s(b)),
            Pow(a, b) => Pow(s(a), s(b)),
            other => other.clone(),
        }
    }

    /// Convenience evaluation with only spatial coordinates and time bound,
    /// as used for analytic fields.
    pub fn eval_at(&self, x: &[f64], t: f64) -> f64 {
        self.eval(&Ctx { n: 0, r: &[], p: &[], u: 0.0, x, t, args: &[] })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(v) => write!(f, "{v}"),
            R(i, j) => write!(f, "r_{}{}", i + 1, j + 1),
            P(i) => write!(f, "p_{}", i + 1),
            X(i) => write!(f, "x_{}", i + 1),
            U => write!(f, "u"),
            T => write!(f, "t"),
            Arg(i) => write!(f, "a_{}", i + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "pow({a}, {b})"),
            Call(g, a) => {
                let name = match g {
                    Func::Exp => "exp",
                    Func::Log => "log",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
            Sigma(k) => write!(f, "sigma({k})"),
            Shifted(a, e) => write!(f, "shift({a}, {e:?})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError { pos: self.pos, msg: msg.to_string() }
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

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            // right-associative; binds tighter than unary minus on the left
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError { pos: start, msg: format!("bad number '{text}'") })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_alphanumeric() || s[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&s[start..self.pos]).unwrap();
        let bad = |msg: String| ParseError { pos: start, msg };
        let index = |digits: &str| -> Result<usize, ParseError> {
            match digits.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(bad(format!("bad index in '{name}'"))),
            }
        };
        match name {
            "u" => return Ok(Expr::U),
            "t" => return Ok(Expr::T),
            "exp" | "log" | "sqrt" => {
                let g = match name {
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    _ => Func::Sqrt,
                };
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b')')?;
                return Ok(Expr::Call(g, Box::new(a)));
            }
            "pow" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                return Ok(Expr::Pow(Box::new(a), Box::new(b)));
            }
            "sigma" => {
                self.expect(b'(')?;
                let k = match self.number()? {
                    Expr::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
                    _ => return Err(bad("sigma order must be a nonnegative integer".into())),
                };
                self.expect(b')')?;
                return Ok(Expr::Sigma(k));
            }
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("r_") {
            let (i, j) = match rest.split_once('_') {
                Some((a, b)) => (index(a)?, index(b)?),
                None if rest.len() == 2 => (index(&rest[..1])?, index(&rest[1..])?),
                None => return Err(bad(format!("matrix entry '{name}' needs two indices"))),
            };
            return Ok(Expr::R(i, j));
        }
        if let Some(rest) = name.strip_prefix("p_") {
            return Ok(Expr::P(index(rest)?));
        }
        if let Some(rest) = name.strip_prefix("x_") {
            return Ok(Expr::X(index(rest)?));
        }
        if let Some(rest) = name.strip_prefix("a_") {
            return Ok(Expr::Arg(index(rest)?));
        }
        // bare x, y, z as aliases for the first three coordinates
        match name {
            "x" => Ok(Expr::X(0)),
            "y" => Ok(Expr::X(1)),
            "z" => Ok(Expr::X(2)),
            _ => Err(bad(format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval_at(x, 0.0)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[]), -4.0);
        assert_eq!(ev("8 / 2 / 2", &[]), 2.0);
        assert_eq!(ev("x^4 + y^4", &[0.5, 1.0]), 1.0625);
        assert_eq!(ev("pow(x_1, 2) + 1.5e1", &[3.0]), 24.0);
        assert!((ev("exp(log(2)) + sqrt(9)", &[]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_entries_and_sigma() {
        let e = Expr::parse("r_11 + r_2_2 - sigma(1)").unwrap();
        assert_eq!(e.usage().dim, 2);
        let r = [1.0, 0.0, 0.0, 2.0];
        let c = Ctx { n: 2, r: &r, p: &[], u: 0.0, x: &[], t: 0.0, args: &[] };
        assert_eq!(e.eval(&c), 0.0);
        assert_eq!(Expr::parse("sigma(2)").unwrap().eval(&c), 2.0);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("r_1").is_err());
        assert!(Expr::parse("x_0").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn substitution() {
        let g = Expr::parse("a_1^2 + a_2").unwrap();
        assert_eq!(g.usage().args, 2);
        let s = g.substitute_args(&[Expr::Sigma(1), Expr::Sigma(2)]);
        assert_eq!(s.usage().args, 0);
        assert!(s.usage().r);
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-x_1 * exp(u) / (r_12 + 2) - pow(p_2, 3)").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        assert_eq!(e, again);
    }
}
