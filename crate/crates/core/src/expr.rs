//! Expression language for smooth profiles, exact Möbius maps and the
//! diffeomorphism wrapper that turns either into jets.

use std::fmt;
use std::ops;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::numeric::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn jet(self, j: &Jet) -> Result<Jet> {
        match self {
            Func::Exp => j.exp(),
            Func::Log => j.log(),
            Func::Sin => j.sin(),
            Func::Cos => j.cos(),
            Func::Tan => j.tan(),
            Func::Sqrt => j.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(Scalar),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn x() -> Expr {
        Expr::X
    }

    pub fn num(s: Scalar) -> Expr {
        Expr::Num(s)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Num(Scalar::int(n))
    }

    pub fn rat(n: i64, d: i64) -> Expr {
        Expr::Num(Scalar::ratio(n, d))
    }

    pub fn pow(self, e: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(e))
    }

    pub fn powi(self, n: i64) -> Expr {
        self.pow(Expr::int(n))
    }

    pub fn call(f: Func, e: Expr) -> Expr {
        Expr::Call(f, Box::new(e))
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    fn as_num(&self) -> Option<&Scalar> {
        match self {
            Expr::Num(s) => Some(s),
            _ => None,
        }
    }

    /// Value at `x0`.
    pub fn eval(&self, x0: &Scalar) -> Result<Scalar> {
        Ok(self.jet_at(x0, 0)?.value().clone())
    }

    /// Jet of the expression at `x0` to order `n`. Exact whenever the
    /// expression is rational-algebraic at a rational point.
    pub fn jet_at(&self, x0: &Scalar, n: usize) -> Result<Jet> {
        Ok(match self {
            Expr::Num(s) => Jet::constant(x0.clone(), s.clone(), n),
            Expr::X => Jet::identity(x0.clone(), n),
            Expr::Neg(a) => a.jet_at(x0, n)?.neg(),
            Expr::Add(a, b) => a.jet_at(x0, n)?.add(&b.jet_at(x0, n)?)?,
            Expr::Sub(a, b) => a.jet_at(x0, n)?.sub(&b.jet_at(x0, n)?)?,
            Expr::Mul(a, b) => a.jet_at(x0, n)?.mul(&b.jet_at(x0, n)?)?,
            Expr::Div(a, b) => {
                let d = b.jet_at(x0, n)?;
                if d.value().is_zero() {
                    return Err(Error::Domain(format!("pole of {self} at {x0}")));
                }
                a.jet_at(x0, n)?.div(&d)?
            }
            Expr::Pow(a, b) => {
                let base = a.jet_at(x0, n)?;
                if b.is_constant() {
                    let e = b.eval(&Scalar::zero())?;
                    base.pow_or_float(&e)?
                } else {
                    base.log()?.mul(&b.jet_at(x0, n)?)?.exp()?
                }
            }
            Expr::Call(f, a) => f.jet(&a.jet_at(x0, n)?)?,
        })
    }

    /// Symbolic derivative with light constant folding.
    pub fn derive(&self) -> Expr {
        match self {
            Expr::Num(_) => Expr::int(0),
            Expr::X => Expr::int(1),
            Expr::Neg(a) => -a.derive(),
            Expr::Add(a, b) => a.derive() + b.derive(),
            Expr::Sub(a, b) => a.derive() - b.derive(),
            Expr::Mul(a, b) => a.derive() * (**b).clone() + (**a).clone() * b.derive(),
            Expr::Div(a, b) => (a.derive() * (**b).clone() - (**a).clone() * b.derive()) / (**b).clone().powi(2),
            Expr::Pow(a, b) => {
                if let Some(c) = b.as_num() {
                    let c1 = c - &Scalar::one();
                    Expr::Num(c.clone()) * (**a).clone().pow(Expr::Num(c1)) * a.derive()
                } else {
                    self.clone()
                        * (b.derive() * Expr::call(Func::Log, (**a).clone())
                            + (**b).clone() * a.derive() / (**a).clone())
                }
            }
            Expr::Call(f, a) => {
                let u = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => Expr::int(1) / u,
                    Func::Sin => Expr::call(Func::Cos, u),
                    Func::Cos => -Expr::call(Func::Sin, u),
                    Func::Tan => Expr::int(1) + self.clone().powi(2),
                    Func::Sqrt => Expr::int(1) / (Expr::int(2) * self.clone()),
                };
                outer * a.derive()
            }
        }
    }

    /// Replaces `x` by `inner`.
    pub fn substitute(&self, inner: &Expr) -> Expr {
        let s = |e: &Expr| Box::new(e.substitute(inner));
        match self {
            Expr::Num(_) => self.clone(),
            Expr::X => inner.clone(),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::Div(s(a), s(b)),
            Expr::Pow(a, b) => Expr::Pow(s(a), s(b)),
            Expr::Call(f, a) => Expr::Call(*f, s(a)),
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    e.as_num().is_some_and(Scalar::is_zero)
}

fn is_one(e: &Expr) -> bool {
    e.as_num().is_some_and(Scalar::is_one)
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        if is_zero(&self) {
            rhs
        } else if is_zero(&rhs) {
            self
        } else {
            Expr::Add(Box::new(self), Box::new(rhs))
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        if is_zero(&rhs) {
            self
        } else if is_zero(&self) {
            -rhs
        } else {
            Expr::Sub(Box::new(self), Box::new(rhs))
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        if is_zero(&self) || is_zero(&rhs) {
            Expr::int(0)
        } else if is_one(&self) {
            rhs
        } else if is_one(&rhs) {
            self
        } else {
            Expr::Mul(Box::new(self), Box::new(rhs))
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        if is_one(&rhs) {
            self
        } else if is_zero(&self) {
            Expr::int(0)
        } else {
            Expr::Div(Box::new(self), Box::new(rhs))
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Num(s) => Expr::Num(-s),
            Expr::Neg(a) => *a,
            e => Expr::Neg(Box::new(e)),
        }
    }
}

// ---------------------------------------------------------------- printing

const P_SUM: u8 = 1;
const P_PROD: u8 = 2;
const P_UNARY: u8 = 3;
const P_ATOM: u8 = 5;

fn num_text(s: &Scalar) -> (String, u8) {
    let plain = s.as_integer().is_some() && s.signum() >= 0;
    if plain {
        (s.to_string(), P_ATOM)
    } else {
        (format!("({s})"), P_ATOM)
    }
}

fn render(e: &Expr) -> (String, u8) {
    match e {
        Expr::Num(s) => num_text(s),
        Expr::X => ("x".into(), P_ATOM),
        Expr::Call(f, a) => (format!("{}({})", f.name(), render(a).0), P_ATOM),
        Expr::Neg(a) => {
            let inner = if matches!(**a, Expr::Num(_)) { format!("({})", render(a).0) } else { wrap(a, P_UNARY) };
            (format!("-{inner}"), P_UNARY)
        }
        Expr::Pow(a, b) => (format!("{}^{}", wrap(a, P_ATOM), wrap(b, P_UNARY)), 4),
        Expr::Add(a, b) => (format!("{} + {}", wrap(a, P_SUM), wrap(b, P_PROD)), P_SUM),
        Expr::Sub(a, b) => (format!("{} - {}", wrap(a, P_SUM), wrap(b, P_PROD)), P_SUM),
        Expr::Mul(a, b) => (format!("{}*{}", wrap(a, P_PROD), wrap(b, P_UNARY)), P_PROD),
        Expr::Div(a, b) => {
            let l = wrap(a, P_PROD);
            let mut r = wrap(b, P_UNARY);
            // `2/3` would read back as a single literal.
            let digit_end = l.chars().last().is_some_and(|c| c.is_ascii_digit());
            if digit_end && r.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                r = format!("({r})");
            }
            (format!("{l}/{r}"), P_PROD)
        }
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let (s, p) = render(e);
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self).0)
    }
}

// ----------------------------------------------------------------- parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(num_bigint::BigInt),
    Ident(String),
    Sym(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|p| p.1).collect();
            out.push((pos, Tok::Int(s.parse().expect("digits"))));
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].1.is_alphanumeric() {
                i += 1;
            }
            out.push((pos, Tok::Ident(chars[start..i].iter().map(|p| p.1).collect())));
        } else {
            let sym = match c {
                '\u{2212}' => '-',
                '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => c,
                _ => return Err(Error::Parse { pos, msg: format!("unexpected character `{c}`") }),
            };
            out.push((pos, Tok::Sym(sym)));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos(), msg: msg.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor_with(false)?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        self.factor_with(true)
    }

    /// `frac` allows a leading `p/q` literal. It is off right after `/` and
    /// `^`, so `x/2/3` and `x^3/5` keep their usual left-to-right reading.
    fn factor_with(&mut self, frac: bool) -> Result<Expr> {
        if self.eat('-') {
            // A literal directly after the sign becomes a negative literal.
            if matches!(self.peek(), Some(Tok::Int(_))) {
                let n = self.rational(frac)?;
                if self.peek() == Some(&Tok::Sym('^')) {
                    return Ok(Expr::Neg(Box::new(self.maybe_pow(Expr::Num(n))?)));
                }
                return Ok(Expr::Num(-n));
            }
            return Ok(Expr::Neg(Box::new(self.factor_with(frac)?)));
        }
        let atom = self.atom(frac)?;
        self.maybe_pow(atom)
    }

    fn maybe_pow(&mut self, atom: Expr) -> Result<Expr> {
        if self.eat('^') {
            let e = self.factor_with(false)?;
            Ok(Expr::Pow(Box::new(atom), Box::new(e)))
        } else {
            Ok(atom)
        }
    }

    fn rational(&mut self, frac: bool) -> Result<Scalar> {
        let Some(Tok::Int(p)) = self.peek().cloned() else {
            return self.err("expected a number");
        };
        self.i += 1;
        let mut value = num_rational::BigRational::from_integer(p);
        if frac && self.peek() == Some(&Tok::Sym('/')) {
            if let Some((_, Tok::Int(q))) = self.toks.get(self.i + 1).cloned() {
                if num_traits::Zero::is_zero(&q) {
                    return self.err("zero denominator");
                }
                self.i += 2;
                value /= num_rational::BigRational::from_integer(q);
            }
        }
        Ok(Scalar::Exact(value))
    }

    fn atom(&mut self, frac: bool) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Int(_)) => Ok(Expr::Num(self.rational(frac)?)),
            Some(Tok::Ident(name)) => {
                if name == "x" {
                    self.i += 1;
                    return Ok(Expr::X);
                }
                let Some(f) = Func::from_name(&name) else {
                    return self.err(format!("unknown identifier `{name}`"));
                };
                self.i += 1;
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(Expr::call(f, arg))
            }
            Some(Tok::Sym('(')) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of input"),
        }
    }
}

/// Parses an expression in `x`.
pub fn parse(text: &str) -> Result<Expr> {
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0, end: text.len() };
    let e = p.expr()?;
    if p.i != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

// ------------------------------------------------------------------ Möbius

/// `x ↦ (a x + b) / (c x + d)`, stored up to scale.
#[derive(Clone, Debug)]
pub struct Mobius {
    a: Scalar,
    b: Scalar,
    c: Scalar,
    d: Scalar,
}

impl Mobius {
    /// Normalizes to `|ad - bc| = 1` when the determinant is a rational
    /// square, and fixes the overall sign by `a > 0`, or `c > 0` if `a = 0`.
    pub fn new(a: Scalar, b: Scalar, c: Scalar, d: Scalar) -> Result<Self> {
        let det = &(&a * &d) - &(&b * &c);
        if det.is_zero() {
            return Err(Error::Domain("degenerate Möbius map (ad - bc = 0)".into()));
        }
        let mut m = Mobius { a, b, c, d };
        if let Ok(s) = det.abs().pow(&Scalar::ratio(1, 2)) {
            m = m.scaled(&s.recip()?);
        }
        let lead = if m.a.is_zero() { m.c.signum() } else { m.a.signum() };
        if lead < 0 {
            m = m.scaled(&Scalar::int(-1));
        }
        Ok(m)
    }

    pub fn from_ints(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        Mobius::new(Scalar::int(a), Scalar::int(b), Scalar::int(c), Scalar::int(d))
    }

    pub fn identity() -> Self {
        Mobius::from_ints(1, 0, 0, 1).expect("identity")
    }

    pub fn translation(t: Scalar) -> Self {
        Mobius::new(Scalar::one(), t, Scalar::zero(), Scalar::one()).expect("translation")
    }

    fn scaled(&self, s: &Scalar) -> Self {
        Mobius { a: &self.a * s, b: &self.b * s, c: &self.c * s, d: &self.d * s }
    }

    pub fn entries(&self) -> [&Scalar; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    pub fn det(&self) -> Scalar {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        let (a, b, c, d) = (&self.a, &self.b, &self.c, &self.d);
        let (e, f, g, h) = (&other.a, &other.b, &other.c, &other.d);
        Mobius::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h).expect("product of invertible matrices")
    }

    pub fn inverse(&self) -> Mobius {
        Mobius::new(self.d.clone(), -&self.b, -&self.c, self.a.clone()).expect("invertible")
    }

    pub fn is_identity(&self) -> bool {
        *self == Mobius::identity()
    }

    fn denom(&self, x0: &Scalar) -> Result<Scalar> {
        let s = &(&self.c * x0) + &self.d;
        if s.is_zero() {
            return Err(Error::Domain(format!("pole of the Möbius map at {x0}")));
        }
        Ok(s)
    }

    pub fn eval(&self, x0: &Scalar) -> Result<Scalar> {
        let s = self.denom(x0)?;
        Ok(&(&(&self.a * x0) + &self.b) / &s)
    }

    /// Exact jet from `f^(n) = (-c)^(n-1) n! det / s^(n+1)`, `s = c x0 + d`.
    pub fn jet_at(&self, x0: &Scalar, n: usize) -> Result<Jet> {
        let s = self.denom(x0)?;
        let det = self.det();
        let inv_s = s.recip()?;
        let mut derivs = vec![self.eval(x0)?];
        let mut coeff = &det * &(&inv_s * &inv_s);
        let minus_c_over_s = &(-&self.c) * &inv_s;
        for k in 1..=n {
            derivs.push(coeff.clone());
            coeff = &(&coeff * &minus_c_over_s) * &Scalar::int(k as i64 + 1);
        }
        Jet::new(x0.clone(), derivs)
    }

    pub fn preimage(&self, y0: &Scalar) -> Result<Scalar> {
        self.inverse().eval(y0)
    }

    pub fn to_expr(&self) -> Expr {
        let lin = |p: &Scalar, q: &Scalar| Expr::Num(p.clone()) * Expr::X + Expr::Num(q.clone());
        lin(&self.a, &self.b) / lin(&self.c, &self.d)
    }
}

impl PartialEq for Mobius {
    /// Projective equality of the coefficient vectors.
    fn eq(&self, other: &Self) -> bool {
        let u = self.entries();
        let v = other.entries();
        (0..4).all(|i| (0..4).all(|j| u[i] * v[j] == u[j] * v[i]))
    }
}

impl fmt::Display for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mobius({},{},{},{})", self.a, self.b, self.c, self.d)
    }
}

// ------------------------------------------------------------------ Diffeo

/// A local diffeomorphism of the line.
#[derive(Clone, Debug)]
pub enum Diffeo {
    Mobius(Mobius),
    Expr {
        forward: Expr,
        inverse: Option<Expr>,
        bracket: Option<(Scalar, Scalar)>,
    },
    /// `outer ∘ inner`.
    Compose(Box<Diffeo>, Box<Diffeo>),
}

impl fmt::Display for Diffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffeo::Mobius(m) => write!(f, "{m}"),
            Diffeo::Expr { forward, .. } => write!(f, "{forward}"),
            Diffeo::Compose(a, b) => write!(f, "({a}) ∘ ({b})"),
        }
    }
}

impl Diffeo {
    pub fn expr(forward: Expr) -> Self {
        Diffeo::Expr { forward, inverse: None, bracket: None }
    }

    pub fn with_inverse(forward: Expr, inverse: Expr) -> Self {
        Diffeo::Expr { forward, inverse: Some(inverse), bracket: None }
    }

    pub fn with_bracket(forward: Expr, lo: Scalar, hi: Scalar) -> Self {
        Diffeo::Expr { forward, inverse: None, bracket: Some((lo, hi)) }
    }

    pub fn identity() -> Self {
        Diffeo::Mobius(Mobius::identity())
    }

    /// `mobius(a,b,c,d)` or an expression in `x`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(rest) = t.strip_prefix("mobius") {
            let inner = rest
                .trim()
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::Parse { pos: 6, msg: "expected mobius(a,b,c,d)".into() })?;
            let parts: Vec<&str> = inner.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse { pos: 7, msg: "mobius needs four entries".into() });
            }
            let v = parts.iter().map(|p| p.parse::<Scalar>()).collect::<Result<Vec<_>>>()?;
            return Ok(Diffeo::Mobius(Mobius::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone())?));
        }
        Ok(Diffeo::expr(parse(t)?))
    }

    pub fn as_mobius(&self) -> Option<&Mobius> {
        match self {
            Diffeo::Mobius(m) => Some(m),
            _ => None,
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Diffeo) -> Diffeo {
        match (self, inner) {
            (Diffeo::Mobius(a), Diffeo::Mobius(b)) => Diffeo::Mobius(a.compose(b)),
            _ => Diffeo::Compose(Box::new(self.clone()), Box::new(inner.clone())),
        }
    }

    pub fn eval(&self, x0: &Scalar) -> Result<Scalar> {
        match self {
            Diffeo::Mobius(m) => m.eval(x0),
            Diffeo::Expr { forward, .. } => forward.eval(x0),
            Diffeo::Compose(o, i) => o.eval(&i.eval(x0)?),
        }
    }

    pub fn jet_at(&self, x0: &Scalar, n: usize) -> Result<Jet> {
        match self {
            Diffeo::Mobius(m) => m.jet_at(x0, n),
            Diffeo::Expr { forward, .. } => forward.jet_at(x0, n),
            Diffeo::Compose(o, i) => {
                let ij = i.jet_at(x0, n)?;
                let oj = o.jet_at(ij.value(), n)?;
                Jet::compose(&oj, &ij)
            }
        }
    }

    /// Whether the map is a usable diffeomorphism germ at `x0`: defined there
    /// with nonzero derivative (positive on the float path).
    pub fn admissible_at(&self, x0: &Scalar) -> bool {
        match self.jet_at(x0, 1) {
            Ok(j) => {
                let d = &j.derivs()[1];
                if d.is_exact() {
                    !d.is_zero()
                } else {
                    d.to_f64() > 0.0
                }
            }
            Err(_) => false,
        }
    }

    /// Solves `f(x) = y0`.
    pub fn preimage(&self, y0: &Scalar) -> Result<Scalar> {
        match self {
            Diffeo::Mobius(m) => m.preimage(y0),
            Diffeo::Expr { inverse: Some(g), .. } => g.eval(y0),
            Diffeo::Expr { forward, bracket: Some((lo, hi)), .. } => {
                bracketed_root(forward, y0.to_f64(), lo.to_f64(), hi.to_f64()).map(Scalar::float)
            }
            Diffeo::Expr { .. } => Err(Error::Bracket("no inverse or monotonicity bracket declared".into())),
            Diffeo::Compose(o, i) => i.preimage(&o.preimage(y0)?),
        }
    }
}

/// Bisection with Newton polishing on `[lo, hi]`.
fn bracketed_root(f: &Expr, y0: f64, lo: f64, hi: f64) -> Result<f64> {
    let g = |x: f64| -> Result<f64> { Ok(f.eval(&Scalar::float(x))?.to_f64() - y0) };
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (g(a)?, g(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!("[{lo}, {hi}] does not enclose f(x) = {y0}")));
    }
    let df = f.derive();
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = g(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let d = df.eval(&Scalar::float(x))?.to_f64();
        let newton = x - fx / d;
        let next = if d != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::ratio(n, d)
    }

    #[test]
    fn parse_shapes() {
        assert_eq!(parse("x").unwrap(), Expr::X);
        match parse("(2*x+1)/(x-3)").unwrap() {
            Expr::Div(a, b) => {
                assert!(matches!(*a, Expr::Add(..)));
                assert!(matches!(*b, Expr::Sub(..)));
            }
            other => panic!("got {other:?}"),
        }
        assert_eq!(parse("1/2").unwrap(), Expr::Num(q(1, 2)));
        assert_eq!(parse("\u{2212}3/2").unwrap(), Expr::Num(q(-3, 2)));
        assert!(matches!(parse("2^3^2").unwrap(), Expr::Pow(_, ref e) if matches!(**e, Expr::Pow(..))));
        assert!(matches!(parse("-x^2").unwrap(), Expr::Neg(_)));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("foo(x)"), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(parse("x +"), Err(Error::Parse { pos: 3, .. })));
        assert!(parse("(x").is_err());
        assert!(parse("x $ 2").is_err());
        assert!(parse("1/0").is_err());
    }

    #[test]
    fn print_round_trip() {
        for s in [
            "tan(x)^2 - 1/2",
            "x/2/3",
            "x^3/5",
            "1/2/3",
            "2/3*x",
            "x/(2/3)",
            "-(3)*x",
            "2^x/2",
            "-x^-2",
            "(1 + x)^(1/2)",
            "-2^2",
            "(-2)^2",
            "x^-3/2",
        ] {
            let e = parse(s).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{s} -> {printed}");
        }
    }

    #[test]
    fn precedence() {
        let e = parse("2 - 3*x^2/4 + -x").unwrap();
        assert_eq!(e.eval(&Scalar::int(2)).unwrap(), Scalar::int(-3));
        assert_eq!(parse("2^3^2").unwrap().eval(&Scalar::zero()).unwrap(), Scalar::int(512));
        assert_eq!(parse("-2^2").unwrap().eval(&Scalar::zero()).unwrap(), Scalar::int(-4));
    }

    #[test]
    fn mobius_jets() {
        let id = Mobius::identity();
        assert_eq!(
            id.jet_at(&Scalar::int(5), 3).unwrap().derivs(),
            &[Scalar::int(5), Scalar::one(), Scalar::zero(), Scalar::zero()]
        );
        let inv = Mobius::from_ints(0, 1, 1, 0).unwrap();
        assert_eq!(inv.jet_at(&Scalar::int(2), 2).unwrap().derivs(), &[q(1, 2), q(-1, 4), q(1, 4)]);
        assert!(inv.jet_at(&Scalar::zero(), 2).is_err());
    }

    #[test]
    fn mobius_group() {
        let m = Mobius::from_ints(2, 1, 1, 1).unwrap();
        assert!(m.compose(&m.inverse()).is_identity());
        let t = Mobius::translation(Scalar::one()).compose(&Mobius::translation(Scalar::int(2)));
        assert_eq!(t, Mobius::translation(Scalar::int(3)));
        let c = Mobius::from_ints(1, 1, 0, 1).unwrap().compose(&Mobius::from_ints(0, 1, -1, 0).unwrap());
        assert_eq!(c, Mobius::from_ints(1, -1, 1, 0).unwrap());
        let [a, b, cc, d] = c.entries();
        assert_eq!(
            (a.clone(), b.clone(), cc.clone(), d.clone()),
            (Scalar::one(), Scalar::int(-1), Scalar::one(), Scalar::zero())
        );
    }

    #[test]
    fn preimages() {
        let inv = Diffeo::parse("mobius(0,1,1,0)").unwrap();
        assert_eq!(inv.preimage(&q(1, 2)).unwrap(), Scalar::int(2));
        let cubic = Diffeo::with_bracket(parse("x^3 + x").unwrap(), Scalar::zero(), Scalar::int(2));
        assert!((cubic.preimage(&Scalar::int(2)).unwrap().to_f64() - 1.0).abs() < 1e-14);
        let e = Diffeo::with_inverse(parse("exp(x)").unwrap(), parse("log(x)").unwrap());
        assert_eq!(e.preimage(&Scalar::one()).unwrap(), Scalar::zero());
        let bad = Diffeo::with_bracket(parse("x^3 + x").unwrap(), Scalar::int(5), Scalar::int(6));
        assert!(matches!(bad.preimage(&Scalar::int(2)), Err(Error::Bracket(_))));
    }

    #[test]
    fn tan_jet() {
        let t = parse("tan(x)").unwrap().jet_at(&Scalar::zero(), 3).unwrap();
        assert_eq!(t.derivs(), &[Scalar::zero(), Scalar::one(), Scalar::zero(), Scalar::int(2)]);
    }

    #[test]
    fn symbolic_derivative_matches_jet() {
        let e = parse("(x^3 - 2*x)/(x^2 + 1)").unwrap();
        let x0 = q(1, 3);
        let j = e.jet_at(&x0, 3).unwrap();
        let mut d = e.clone();
        for k in 0..=3 {
            assert_eq!(d.eval(&x0).unwrap(), j.derivs()[k]);
            d = d.derive();
        }
    }
}
