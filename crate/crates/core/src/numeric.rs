//! Scalar tower (exact rationals and doubles), generalized binomials and an
//! exact Gaussian-elimination solver.
//!
//! Exactness propagates: an operation on two rationals stays rational, and a
//! float anywhere in an expression turns the result into a float.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A number that is either an exact rational or an `f64`.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(BigRational::one())
    }

    pub fn int(n: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num / den` as an exact rational. Panics on a zero denominator.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn float(v: f64) -> Self {
        Scalar::Float(v)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_zero(),
            Scalar::Float(v) => *v == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_one(),
            Scalar::Float(v) => *v == 1.0,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    /// Integer value when this is an exact integer.
    pub fn as_integer(&self) -> Option<BigInt> {
        match self {
            Scalar::Exact(r) if r.is_integer() => Some(r.to_integer()),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        self.as_integer().and_then(|n| n.to_i64())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => rational_to_f64(r),
            Scalar::Float(v) => *v,
        }
    }

    pub fn to_float(&self) -> Scalar {
        Scalar::Float(self.to_f64())
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(r.abs()),
            Scalar::Float(v) => Scalar::Float(v.abs()),
        }
    }

    /// Sign as -1, 0 or 1.
    pub fn signum(&self) -> i32 {
        match self {
            Scalar::Exact(r) => match r.numer().sign() {
                Sign::Minus => -1,
                Sign::NoSign => 0,
                Sign::Plus => 1,
            },
            Scalar::Float(v) => {
                if *v > 0.0 {
                    1
                } else if *v < 0.0 {
                    -1
                } else {
                    0
                }
            }
        }
    }

    pub fn recip(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::Domain("division by zero".into()));
        }
        Ok(match self {
            Scalar::Exact(r) => Scalar::Exact(r.recip()),
            Scalar::Float(v) => Scalar::Float(1.0 / v),
        })
    }

    pub fn checked_div(&self, other: &Scalar) -> Result<Scalar> {
        Ok(self * &other.recip()?)
    }

    /// Integer power; negative exponents require a nonzero base.
    pub fn powi(&self, e: i64) -> Result<Scalar> {
        if e < 0 {
            return self.recip()?.powi(-e);
        }
        Ok(match self {
            Scalar::Exact(r) => Scalar::Exact(num_traits::pow(r.clone(), e as usize)),
            Scalar::Float(v) => Scalar::Float(v.powi(e as i32)),
        })
    }

    /// Rational power. For an exact base the result is exact when it is a
    /// rational perfect power and an [`Error::Inexact`] otherwise; a float
    /// base needs to be positive for non-integer exponents.
    pub fn pow(&self, e: &Scalar) -> Result<Scalar> {
        if let Some(n) = e.as_i64() {
            return self.powi(n);
        }
        match (self, e) {
            (Scalar::Exact(base), Scalar::Exact(exp)) => {
                if !base.is_positive() {
                    return Err(Error::Domain(format!("fractional power of non-positive value {self}")));
                }
                let q = exp.denom().to_u32().ok_or_else(|| Error::Inexact(format!("{self}^{e}")))?;
                let root = |n: &BigInt| -> Option<BigInt> {
                    let r = n.nth_root(q);
                    (num_traits::pow(r.clone(), q as usize) == *n).then_some(r)
                };
                match (root(base.numer()), root(base.denom())) {
                    (Some(a), Some(b)) => Scalar::Exact(BigRational::new(a, b))
                        .powi(exp.numer().to_i64().ok_or_else(|| Error::Inexact(format!("{self}^{e}")))?),
                    _ => Err(Error::Inexact(format!("{self}^{e}"))),
                }
            }
            _ => {
                let b = self.to_f64();
                if b <= 0.0 {
                    return Err(Error::Domain(format!("fractional power of non-positive value {self}")));
                }
                Ok(Scalar::Float(b.powf(e.to_f64())))
            }
        }
    }

    /// Like [`Scalar::pow`] but falls back to a float when the exact result
    /// would be irrational.
    pub fn pow_or_float(&self, e: &Scalar) -> Result<Scalar> {
        match self.pow(e) {
            Err(Error::Inexact(_)) => self.to_float().pow(e),
            other => other,
        }
    }

    /// Exact comparison for rationals, numeric comparison otherwise.
    pub fn partial_cmp_value(&self, other: &Scalar) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }

    pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a Scalar>) -> Scalar {
        values.into_iter().fold(Scalar::zero(), |acc, v| {
            let a = v.abs();
            match a.partial_cmp_value(&acc) {
                Some(Ordering::Greater) => a,
                // NaN poisons the maximum.
                None => Scalar::Float(f64::NAN),
                _ => acc,
            }
        })
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Scale down huge numerators/denominators before dividing.
            let nb = r.numer().bits() as i64;
            let db = r.denom().bits() as i64;
            let shift = nb.max(db) - 1000;
            let (n, d) = if shift > 0 {
                let s = shift as usize;
                ((r.numer() >> s).to_f64().unwrap_or(0.0), (r.denom() >> s).to_f64().unwrap_or(0.0))
            } else {
                (r.numer().to_f64().unwrap_or(0.0), r.denom().to_f64().unwrap_or(0.0))
            };
            n / d
        }
    }
}

impl PartialEq for Scalar {
    /// Exact equality for two rationals; bitwise-value equality otherwise.
    /// Use [`Tolerance`] for approximate comparisons.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::int(n)
    }
}

impl From<BigRational> for Scalar {
    fn from(r: BigRational) -> Self {
        Scalar::Exact(r)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

macro_rules! scalar_binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<'a> $tr<&'a Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'a Scalar) -> Scalar {
                match (self, rhs) {
                    (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a $op b),
                    _ => Scalar::Float(self.to_f64() $op rhs.to_f64()),
                }
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'a Scalar) -> Scalar {
                (&self).$method(rhs)
            }
        }
    };
}

scalar_binop!(Add, add, +);
scalar_binop!(Sub, sub, -);
scalar_binop!(Mul, mul, *);

impl<'a> Div<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    /// Panics on exact division by zero; use [`Scalar::checked_div`] when the
    /// divisor may vanish.
    fn div(self, rhs: &'a Scalar) -> Scalar {
        self.checked_div(rhs).expect("division by zero")
    }
}

impl Div<Scalar> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        &self / &rhs
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(-r),
            Scalar::Float(v) => Scalar::Float(-v),
        }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -(self.clone())
    }
}

impl fmt::Display for Scalar {
    /// Rationals as `p/q` (or `p`), floats with 15 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Scalar::Float(v) => write!(f, "{}", format_float(*v)),
        }
    }
}

/// Float formatting with 15 significant digits, trailing zeros trimmed.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        let s = format!("{:.14e}", v);
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        return format!("{mant}e{e}");
    }
    let decimals = (14 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        let t = s.trim_end_matches('0');
        if t.ends_with('.') {
            format!("{t}0")
        } else {
            t.to_string()
        }
    } else {
        format!("{s}.0")
    }
}

impl FromStr for Scalar {
    type Err = Error;

    /// Parses `p`, `p/q` (with an ASCII or Unicode minus) or a decimal float.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace('\u{2212}', "-");
        let parse_int = |x: &str| -> Result<BigInt> {
            x.trim().parse::<BigInt>().map_err(|_| Error::Parse { pos: 0, msg: format!("bad number `{s}`") })
        };
        if let Some((p, q)) = t.split_once('/') {
            let p = parse_int(p)?;
            let q = parse_int(q)?;
            if q.is_zero() {
                return Err(Error::Parse { pos: 0, msg: format!("zero denominator in `{s}`") });
            }
            return Ok(Scalar::Exact(BigRational::new(p, q)));
        }
        if let Ok(n) = t.parse::<BigInt>() {
            return Ok(Scalar::Exact(BigRational::from_integer(n)));
        }
        t.parse::<f64>().map(Scalar::Float).map_err(|_| Error::Parse { pos: 0, msg: format!("bad number `{s}`") })
    }
}

/// Mixed relative/absolute tolerance for float comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-8, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    /// Exact comparison when both sides are rational.
    pub fn eq(&self, a: &Scalar, b: &Scalar) -> bool {
        if a.is_exact() && b.is_exact() {
            return a == b;
        }
        let (x, y) = (a.to_f64(), b.to_f64());
        let scale = x.abs().max(y.abs());
        (x - y).abs() <= self.abs.max(self.rel * scale)
    }

    /// Whether a residual is negligible relative to `scale`.
    pub fn negligible(&self, residual: &Scalar, scale: f64) -> bool {
        if residual.is_exact() {
            return residual.is_zero();
        }
        residual.to_f64().abs() <= self.abs.max(self.rel * scale.abs())
    }
}

/// Generalized binomial coefficient `r (r-1) ... (r-i+1) / i!`.
pub fn gen_binomial(r: &Scalar, i: u32) -> Scalar {
    let mut acc = Scalar::one();
    for t in 0..i {
        let num = r - &Scalar::int(t as i64);
        acc = &(&acc * &num) / &Scalar::int(t as i64 + 1);
    }
    acc
}

pub fn factorial(n: u32) -> Scalar {
    (1..=n as i64).fold(Scalar::one(), |acc, k| acc * Scalar::int(k))
}

/// Ordinary binomial coefficient for small non-negative integers.
pub fn binomial(n: u32, k: u32) -> Scalar {
    if k > n {
        return Scalar::zero();
    }
    gen_binomial(&Scalar::int(n as i64), k)
}

/// A dense linear system `A x = b`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    rows: Vec<Vec<Scalar>>,
    rhs: Vec<Scalar>,
    cols: usize,
}

impl LinearSystem {
    pub fn new(rows: Vec<Vec<Scalar>>, rhs: Vec<Scalar>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::Shape(format!("{} rows but {} right-hand entries", rows.len(), rhs.len())));
        }
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged coefficient matrix".into()));
        }
        Ok(LinearSystem { rows, rhs, cols })
    }

    /// Homogeneous system with `cols` unknowns.
    pub fn homogeneous(rows: Vec<Vec<Scalar>>, cols: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged coefficient matrix".into()));
        }
        let rhs = vec![Scalar::zero(); rows.len()];
        Ok(LinearSystem { rows, rhs, cols })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[Scalar] {
        &self.rhs
    }

    /// `A x`.
    pub fn apply(&self, x: &[Scalar]) -> Vec<Scalar> {
        self.rows.iter().map(|row| row.iter().zip(x).fold(Scalar::zero(), |acc, (a, v)| acc + a * v)).collect()
    }
}

/// Outcome of [`solve_linear`].
#[derive(Clone, Debug, PartialEq)]
pub enum Solution {
    Unique(Vec<Scalar>),
    /// `particular + span(null_basis)`; each basis vector has its first
    /// nonzero entry equal to 1.
    Affine {
        particular: Vec<Scalar>,
        null_basis: Vec<Vec<Scalar>>,
    },
    Inconsistent,
}

impl Solution {
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Solution::Unique(_) => Some(0),
            Solution::Affine { null_basis, .. } => Some(null_basis.len()),
            Solution::Inconsistent => None,
        }
    }
}

/// Gauss-Jordan elimination with first-nonzero pivoting.
pub fn solve_linear(sys: &LinearSystem) -> Solution {
    let n = sys.cols;
    let mut m: Vec<Vec<Scalar>> = sys
        .rows
        .iter()
        .zip(&sys.rhs)
        .map(|(r, b)| {
            let mut row = r.clone();
            row.push(b.clone());
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip().expect("pivot is nonzero");
        for v in m[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                let pivot_row = m[r].clone();
                for (x, p) in m[i].iter_mut().zip(&pivot_row).skip(c) {
                    *x = &*x - &(&factor * p);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if m[r..].iter().any(|row| !row[n].is_zero()) {
        return Solution::Inconsistent;
    }
    let mut particular = vec![Scalar::zero(); n];
    for (i, &c) in pivots.iter().enumerate() {
        particular[c] = m[i][n].clone();
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    if free.is_empty() {
        return Solution::Unique(particular);
    }
    let null_basis = free
        .iter()
        .map(|&fc| {
            let mut v = vec![Scalar::zero(); n];
            v[fc] = Scalar::one();
            for (i, &c) in pivots.iter().enumerate() {
                v[c] = -&m[i][fc];
            }
            normalize_leading(&v)
        })
        .collect();
    Solution::Affine { particular, null_basis }
}

/// Scales a vector so that its first nonzero entry is 1.
pub fn normalize_leading(v: &[Scalar]) -> Vec<Scalar> {
    match v.iter().find(|x| !x.is_zero()) {
        Some(lead) => {
            let inv = lead.recip().expect("nonzero");
            v.iter().map(|x| x * &inv).collect()
        }
        None => v.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::ratio(n, d)
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(gen_binomial(&Scalar::int(4), 2), Scalar::int(6));
        assert_eq!(gen_binomial(&q(7, 3), 0), Scalar::one());
        assert_eq!(gen_binomial(&q(1, 2), 2), q(-1, 8));
        assert_eq!(gen_binomial(&Scalar::int(2), 5), Scalar::zero());
    }

    #[test]
    fn exactness_propagates() {
        let s = q(1, 3) + q(2, 3);
        assert!(s.is_exact());
        assert_eq!(s, Scalar::one());
        let m = q(1, 2) * Scalar::float(2.0);
        assert!(!m.is_exact());
    }

    #[test]
    fn lowest_terms() {
        let s: Scalar = "6/-4".parse().unwrap();
        let r = s.as_rational().unwrap();
        assert_eq!(r.numer(), &BigInt::from(-3));
        assert_eq!(r.denom(), &BigInt::from(2));
        assert_eq!(s.to_string(), "-3/2");
        assert_eq!("\u{2212}3/2".parse::<Scalar>().unwrap(), q(-3, 2));
    }

    #[test]
    fn rational_powers() {
        assert_eq!(q(9, 4).pow(&q(1, 2)).unwrap(), q(3, 2));
        assert_eq!(q(4, 9).pow(&q(-3, 2)).unwrap(), q(27, 8));
        assert!(matches!(q(2, 1).pow(&q(1, 2)), Err(Error::Inexact(_))));
        assert!(q(2, 1).pow_or_float(&q(1, 2)).unwrap().to_f64() - 2f64.sqrt() < 1e-15);
        assert!(matches!(q(-4, 1).pow(&q(1, 2)), Err(Error::Domain(_))));
    }

    #[test]
    fn solve_identity() {
        let sys = LinearSystem::new(
            vec![vec![Scalar::one(), Scalar::zero()], vec![Scalar::zero(), Scalar::one()]],
            vec![Scalar::int(1), Scalar::int(2)],
        )
        .unwrap();
        assert_eq!(solve_linear(&sys), Solution::Unique(vec![Scalar::int(1), Scalar::int(2)]));
    }

    #[test]
    fn solve_null_space() {
        let sys = LinearSystem::homogeneous(vec![vec![Scalar::one(), Scalar::one()]], 2).unwrap();
        match solve_linear(&sys) {
            Solution::Affine { null_basis, .. } => {
                assert_eq!(null_basis, vec![vec![Scalar::one(), Scalar::int(-1)]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_inconsistent() {
        let sys =
            LinearSystem::new(vec![vec![Scalar::one()], vec![Scalar::one()]], vec![Scalar::int(1), Scalar::int(2)])
                .unwrap();
        assert_eq!(solve_linear(&sys), Solution::Inconsistent);
    }

    #[test]
    fn ragged_rejected() {
        assert!(LinearSystem::new(
            vec![vec![Scalar::one()], vec![Scalar::one(), Scalar::one()]],
            vec![Scalar::one(), Scalar::one()]
        )
        .is_err());
    }

    #[test]
    fn tolerance_floor() {
        let t = Tolerance::default();
        assert!(t.eq(&Scalar::float(0.0), &Scalar::float(5e-13)));
        assert!(!t.eq(&Scalar::float(1.0), &Scalar::float(1.0 + 1e-6)));
        assert!(t.eq(&Scalar::float(1e6), &Scalar::float(1e6 + 1e-3)));
        assert!(t.eq(&q(1, 3), &q(2, 6)));
    }

    #[test]
    fn float_display() {
        assert_eq!(format_float(2.0), "2.0");
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(-1.5), "-1.5");
    }
}
