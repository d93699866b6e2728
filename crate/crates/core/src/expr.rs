//! Arithmetic expressions in the chart variables `x`, `y`, evaluated either as
//! plain values or as second-order jets (value plus first and second partials).
//! Jets give exact derivatives of user-defined metric and 1-form components, so
//! the variational machinery downstream differentiates the discrete action
//! exactly instead of stacking finite differences.

use crate::error::{Error, Result};

/// Value and partial derivatives up to second order at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2::constant(0.0);

    pub const fn constant(v: f64) -> Jet2 {
        Jet2 { v, dx: 0.0, dy: 0.0, dxx: 0.0, dxy: 0.0, dyy: 0.0 }
    }

    pub fn var_x(x: f64) -> Jet2 {
        Jet2 { v: x, dx: 1.0, ..Jet2::ZERO }
    }

    pub fn var_y(y: f64) -> Jet2 {
        Jet2 { v: y, dy: 1.0, ..Jet2::ZERO }
    }

    /// Composition with a scalar function given its value and first two
    /// derivatives at `self.v`.
    pub fn chain(self, f: f64, fp: f64, fpp: f64) -> Jet2 {
        Jet2 {
            v: f,
            dx: fp * self.dx,
            dy: fp * self.dy,
            dxx: fpp * self.dx * self.dx + fp * self.dxx,
            dxy: fpp * self.dx * self.dy + fp * self.dxy,
            dyy: fpp * self.dy * self.dy + fp * self.dyy,
        }
    }

    pub fn exp(self) -> Jet2 {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sin(self) -> Jet2 {
        self.chain(self.v.sin(), self.v.cos(), -self.v.sin())
    }

    pub fn cos(self) -> Jet2 {
        self.chain(self.v.cos(), -self.v.sin(), -self.v.cos())
    }

    pub fn powf(self, p: f64) -> Jet2 {
        // Integer exponents stay exact for negative bases.
        if p == p.trunc() && p.abs() <= 64.0 {
            let n = p as i32;
            let f = self.v.powi(n);
            let fp = p * self.v.powi(n - 1);
            let fpp = p * (p - 1.0) * self.v.powi(n - 2);
            return self.chain(f, fp, fpp);
        }
        let f = self.v.powf(p);
        let fp = p * self.v.powf(p - 1.0);
        let fpp = p * (p - 1.0) * self.v.powf(p - 2.0);
        self.chain(f, fp, fpp)
    }

    pub fn recip(self) -> Jet2 {
        let u = self.v;
        self.chain(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u))
    }
}

impl std::ops::Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dxy: self.dxy + o.dxy,
            dyy: self.dyy + o.dyy,
        }
    }
}

impl std::ops::Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v - o.v,
            dx: self.dx - o.dx,
            dy: self.dy - o.dy,
            dxx: self.dxx - o.dxx,
            dxy: self.dxy - o.dxy,
            dyy: self.dyy - o.dyy,
        }
    }
}

impl std::ops::Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2 {
            v: -self.v,
            dx: -self.dx,
            dy: -self.dy,
            dxx: -self.dxx,
            dxy: -self.dxy,
            dyy: -self.dyy,
        }
    }
}

impl std::ops::Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dy: self.dy * o.v + self.v * o.dy,
            dxx: self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
            dxy: self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
            dyy: self.dyy * o.v + 2.0 * self.dy * o.dy + self.v * o.dyy,
        }
    }
}

impl std::ops::Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

/// Parsed expression over `x`, `y` with `+ - * / ^`, parentheses, `pi`, and the
/// functions `exp`, `sin`, `cos`. Exponents must be constant subexpressions.
#[derive(Clone, Debug)]
pub enum Ast {
    Num(f64),
    X,
    Y,
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, f64),
    Exp(Box<Ast>),
    Sin(Box<Ast>),
    Cos(Box<Ast>),
}

impl Ast {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Ast::Num(c) => *c,
            Ast::X => x,
            Ast::Y => y,
            Ast::Neg(a) => -a.eval(x, y),
            Ast::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Ast::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Ast::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Ast::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Ast::Pow(a, p) => {
                let base = a.eval(x, y);
                if *p == p.trunc() && p.abs() <= 64.0 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                }
            }
            Ast::Exp(a) => a.eval(x, y).exp(),
            Ast::Sin(a) => a.eval(x, y).sin(),
            Ast::Cos(a) => a.eval(x, y).cos(),
        }
    }

    pub fn eval_jet(&self, x: f64, y: f64) -> Jet2 {
        match self {
            Ast::Num(c) => Jet2::constant(*c),
            Ast::X => Jet2::var_x(x),
            Ast::Y => Jet2::var_y(y),
            Ast::Neg(a) => -a.eval_jet(x, y),
            Ast::Add(a, b) => a.eval_jet(x, y) + b.eval_jet(x, y),
            Ast::Sub(a, b) => a.eval_jet(x, y) - b.eval_jet(x, y),
            Ast::Mul(a, b) => a.eval_jet(x, y) * b.eval_jet(x, y),
            Ast::Div(a, b) => a.eval_jet(x, y) / b.eval_jet(x, y),
            Ast::Pow(a, p) => a.eval_jet(x, y).powf(*p),
            Ast::Exp(a) => a.eval_jet(x, y).exp(),
            Ast::Sin(a) => a.eval_jet(x, y).sin(),
            Ast::Cos(a) => a.eval_jet(x, y).cos(),
        }
    }

    /// Constant-folds a subtree; `None` if it depends on `x` or `y`.
    fn as_const(&self) -> Option<f64> {
        match self {
            Ast::Num(c) => Some(*c),
            Ast::X | Ast::Y => None,
            Ast::Neg(a) => a.as_const().map(|v| -v),
            Ast::Add(a, b) => Some(a.as_const()? + b.as_const()?),
            Ast::Sub(a, b) => Some(a.as_const()? - b.as_const()?),
            Ast::Mul(a, b) => Some(a.as_const()? * b.as_const()?),
            Ast::Div(a, b) => Some(a.as_const()? / b.as_const()?),
            Ast::Pow(a, p) => Some(a.as_const()?.powf(*p)),
            Ast::Exp(a) => a.as_const().map(f64::exp),
            Ast::Sin(a) => a.as_const().map(f64::sin),
            Ast::Cos(a) => a.as_const().map(f64::cos),
        }
    }
}

pub fn parse(src: &str) -> Result<Ast> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, src };
    let ast = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("trailing input"));
    }
    Ok(ast)
}

#[derive(Clone, Debug, PartialEq)]
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

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == b'.'
                        || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'+' || bytes[i] == b'-')
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
                {
                    i += 1;
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Expr(format!("bad number `{text}` at byte {start}")))?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Tok::Ident(src[start..i].to_string()));
            }
            _ => return Err(Error::Expr(format!("unexpected character `{c}` at byte {i}"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Expr(format!("{msg} (token {} in `{}`)", self.pos, self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {t:?}")))
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            let p = exponent
                .as_const()
                .ok_or_else(|| self.err("exponent must be a constant expression"))?;
            return Ok(Ast::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Ast::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Ast::X),
                "y" => Ok(Ast::Y),
                "pi" => Ok(Ast::Num(std::f64::consts::PI)),
                "exp" | "sin" | "cos" => {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(match name.as_str() {
                        "exp" => Ast::Exp(Box::new(arg)),
                        "sin" => Ast::Sin(Box::new(arg)),
                        _ => Ast::Cos(Box::new(arg)),
                    })
                }
                _ => Err(Error::Expr(format!(
                    "unknown identifier `{name}`; allowed: x, y, pi, exp, sin, cos"
                ))),
            },
            _ => Err(self.err("expected a number, variable, or parenthesized expression")),
        }
    }
}
