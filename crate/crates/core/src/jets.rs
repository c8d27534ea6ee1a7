//! Truncated jets: derivative values `f(x0), f'(x0), ..., f^(N)(x0)`.
//!
//! Arithmetic is done on the Taylor form `f^(i)(x0)/i!` internally and
//! converted back, so composition is Horner substitution and inversion is
//! Lagrange reversion.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::numeric::{factorial, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    base: Scalar,
    derivs: Vec<Scalar>,
}

/// Whether two base points agree: exactly on rationals, to 1e-9 otherwise.
pub fn same_point(a: &Scalar, b: &Scalar) -> bool {
    if a.is_exact() && b.is_exact() {
        return a == b;
    }
    let (x, y) = (a.to_f64(), b.to_f64());
    (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
}

fn check_base(a: &Scalar, b: &Scalar) -> Result<()> {
    if same_point(a, b) {
        Ok(())
    } else {
        Err(Error::BaseMismatch(a.to_string(), b.to_string()))
    }
}

fn factorials(n: usize) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = Scalar::one();
    out.push(acc.clone());
    for k in 1..=n {
        acc = acc * Scalar::int(k as i64);
        out.push(acc.clone());
    }
    out
}

/// Integer numerators over one common denominator, when every entry is exact.
fn common_denominator(a: &[Scalar]) -> Option<(Vec<BigInt>, BigInt)> {
    let mut den = BigInt::one();
    for x in a {
        den = den.lcm(x.as_rational()?.denom());
    }
    let nums = a
        .iter()
        .map(|x| {
            let r = x.as_rational().expect("checked above");
            r.numer() * (&den / r.denom())
        })
        .collect();
    Some((nums, den))
}

/// Truncated product of two Taylor series.
fn series_mul(a: &[Scalar], b: &[Scalar], len: usize) -> Vec<Scalar> {
    if let (Some((na, da)), Some((nb, db))) = (common_denominator(a), common_denominator(b)) {
        // One reduction per coefficient instead of one per term.
        let den = da * db;
        return (0..len)
            .map(|n| {
                let mut acc = BigInt::zero();
                for i in 0..=n {
                    if i < na.len() && n - i < nb.len() {
                        acc += &na[i] * &nb[n - i];
                    }
                }
                Scalar::Exact(BigRational::new(acc, den.clone()))
            })
            .collect();
    }
    (0..len)
        .map(|n| {
            let mut acc = Scalar::zero();
            for i in 0..=n {
                if i < a.len() && n - i < b.len() && !a[i].is_zero() && !b[n - i].is_zero() {
                    acc = acc + &a[i] * &b[n - i];
                }
            }
            acc
        })
        .collect()
}

fn series_recip(a: &[Scalar]) -> Result<Vec<Scalar>> {
    let inv0 = a[0].recip()?;
    if let Some((na, da)) = common_denominator(a) {
        // 1/A = C_n / A_0^(n+1) with C integer.
        let mut c = vec![BigInt::one()];
        let mut p0 = vec![BigInt::one()];
        for n in 1..a.len() {
            p0.push(&p0[n - 1] * &na[0]);
            let mut acc = BigInt::zero();
            for k in 1..=n {
                if !na[k].is_zero() {
                    acc += &na[k] * &c[n - k] * &p0[k - 1];
                }
            }
            c.push(-acc);
        }
        let mut pw = na[0].clone();
        let mut out = Vec::with_capacity(a.len());
        for cn in c {
            out.push(Scalar::Exact(BigRational::new(cn * &da, pw.clone())));
            pw *= &na[0];
        }
        return Ok(out);
    }
    let mut b = vec![inv0.clone()];
    for n in 1..a.len() {
        let mut acc = Scalar::zero();
        for k in 1..=n {
            if !a[k].is_zero() {
                acc = acc + &a[k] * &b[n - k];
            }
        }
        b.push(-(&acc * &inv0));
    }
    Ok(b)
}

impl Jet {
    pub fn new(base: Scalar, derivs: Vec<Scalar>) -> Result<Self> {
        if derivs.is_empty() {
            return Err(Error::Shape("a jet needs at least one value".into()));
        }
        Ok(Jet { base, derivs }.normalized())
    }

    pub fn constant(base: Scalar, value: Scalar, order: usize) -> Self {
        let mut derivs = vec![Scalar::zero(); order + 1];
        derivs[0] = value;
        Jet { base, derivs }.normalized()
    }

    pub fn zero(base: Scalar, order: usize) -> Self {
        Jet::constant(base, Scalar::zero(), order)
    }

    /// Jet of the coordinate function `x`.
    pub fn identity(base: Scalar, order: usize) -> Self {
        let mut derivs = vec![Scalar::zero(); order + 1];
        derivs[0] = base.clone();
        if order >= 1 {
            derivs[1] = Scalar::one();
        }
        Jet { base, derivs }.normalized()
    }

    /// Jet of `(x - base)^j`.
    pub fn monomial(base: Scalar, j: usize, order: usize) -> Self {
        let mut derivs = vec![Scalar::zero(); order + 1];
        if j <= order {
            derivs[j] = factorial(j as u32);
        }
        Jet { base, derivs }
    }

    /// Builds a jet from Taylor coefficients `f^(i)(x0)/i!`.
    pub fn from_taylor(base: Scalar, coeffs: Vec<Scalar>) -> Result<Self> {
        let f = factorials(coeffs.len());
        let derivs = coeffs.into_iter().zip(f).map(|(c, k)| c * k).collect();
        Jet::new(base, derivs)
    }

    pub fn taylor(&self) -> Vec<Scalar> {
        let f = factorials(self.order());
        self.derivs.iter().zip(&f).map(|(d, k)| d / k).collect()
    }

    /// A float anywhere makes the whole jet float.
    fn normalized(mut self) -> Self {
        let any_float = !self.base.is_exact() || self.derivs.iter().any(|d| !d.is_exact());
        if any_float {
            self.base = self.base.to_float();
            for d in &mut self.derivs {
                *d = d.to_float();
            }
        }
        self
    }

    pub fn base(&self) -> &Scalar {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    pub fn derivs(&self) -> &[Scalar] {
        &self.derivs
    }

    pub fn value(&self) -> &Scalar {
        &self.derivs[0]
    }

    pub fn deriv(&self, i: usize) -> Option<&Scalar> {
        self.derivs.get(i)
    }

    pub fn is_exact(&self) -> bool {
        self.derivs[0].is_exact() && self.base.is_exact()
    }

    pub fn is_zero(&self) -> bool {
        self.derivs.iter().all(Scalar::is_zero)
    }

    pub fn to_float(&self) -> Jet {
        Jet { base: self.base.to_float(), derivs: self.derivs.iter().map(Scalar::to_float).collect() }
    }

    pub fn truncate(&self, order: usize) -> Result<Jet> {
        if order > self.order() {
            return Err(Error::OrderShortfall { needed: order, have: self.order() });
        }
        Ok(Jet { base: self.base.clone(), derivs: self.derivs[..=order].to_vec() })
    }

    /// Same derivative values, relabelled at a base point equal to the
    /// current one (used to replace a float base by its exact twin).
    pub fn rebase(&self, base: Scalar) -> Result<Jet> {
        check_base(&self.base, &base)?;
        Ok(Jet { base, derivs: self.derivs.clone() }.normalized())
    }

    fn zip_with(&self, other: &Jet, op: impl Fn(&Scalar, &Scalar) -> Scalar) -> Result<Jet> {
        check_base(&self.base, &other.base)?;
        let n = self.order().min(other.order());
        let derivs = (0..=n).map(|i| op(&self.derivs[i], &other.derivs[i])).collect();
        Ok(Jet { base: self.base.clone(), derivs }.normalized())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet {
        Jet { base: self.base.clone(), derivs: self.derivs.iter().map(|d| -d).collect() }
    }

    pub fn scale(&self, c: &Scalar) -> Jet {
        Jet { base: self.base.clone(), derivs: self.derivs.iter().map(|d| d * c).collect() }.normalized()
    }

    /// Adds a constant to the value.
    pub fn add_scalar(&self, c: &Scalar) -> Jet {
        let mut out = self.clone();
        out.derivs[0] = &out.derivs[0] + c;
        out.normalized()
    }

    /// Leibniz product; the result has the smaller of the two orders.
    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        check_base(&self.base, &other.base)?;
        let n = self.order().min(other.order());
        if let (Some((na, da)), Some((nb, db))) =
            (common_denominator(&self.derivs[..=n]), common_denominator(&other.derivs[..=n]))
        {
            let den = da * db;
            let mut row = vec![BigInt::one()];
            let mut derivs = Vec::with_capacity(n + 1);
            for k in 0..=n {
                if k > 0 {
                    // Pascal row k.
                    let mut next = vec![BigInt::one(); k + 1];
                    for i in 1..k {
                        next[i] = &row[i - 1] + &row[i];
                    }
                    row = next;
                }
                let mut acc = BigInt::zero();
                for i in 0..=k {
                    if !na[i].is_zero() && !nb[k - i].is_zero() {
                        acc += &row[i] * &na[i] * &nb[k - i];
                    }
                }
                derivs.push(Scalar::Exact(BigRational::new(acc, den.clone())));
            }
            return Ok(Jet { base: self.base.clone(), derivs });
        }
        let c = series_mul(&self.taylor(), &other.taylor(), n + 1);
        Jet::from_taylor(self.base.clone(), c)
    }

    pub fn derive(&self) -> Result<Jet> {
        if self.order() == 0 {
            return Err(Error::OrderShortfall { needed: 1, have: 0 });
        }
        Ok(Jet { base: self.base.clone(), derivs: self.derivs[1..].to_vec() })
    }

    /// `k`-fold derivative.
    pub fn derive_n(&self, k: usize) -> Result<Jet> {
        if k > self.order() {
            return Err(Error::OrderShortfall { needed: k, have: self.order() });
        }
        Ok(Jet { base: self.base.clone(), derivs: self.derivs[k..].to_vec() })
    }

    /// `outer ∘ inner`, where `outer` is based at the value of `inner`.
    pub fn compose(outer: &Jet, inner: &Jet) -> Result<Jet> {
        check_base(&outer.base, inner.value())?;
        let n = outer.order().min(inner.order());
        let o = outer.taylor();
        let mut t = inner.taylor();
        t.truncate(n + 1);
        t[0] = Scalar::zero();
        if let (Some(_), Some((tn, td))) = (common_denominator(&o[..=n]), common_denominator(&t)) {
            // Horner on integer numerators over a single running denominator.
            let rat = |x: &Scalar| x.as_rational().expect("exact").clone();
            let on = rat(&o[n]);
            let mut acc = vec![BigInt::zero(); n + 1];
            acc[0] = on.numer().clone();
            let mut den = on.denom().clone();
            for k in (0..n).rev() {
                let mut next = vec![BigInt::zero(); n + 1];
                for (i, a) in acc.iter().enumerate().filter(|(_, a)| !a.is_zero()) {
                    for (j, b) in tn.iter().enumerate().take(n + 1 - i).skip(1) {
                        if !b.is_zero() {
                            next[i + j] += a * b;
                        }
                    }
                }
                den *= &td;
                let ok = rat(&o[k]);
                if !ok.is_zero() {
                    for x in next.iter_mut() {
                        *x *= ok.denom();
                    }
                    next[0] += ok.numer() * &den;
                    den *= ok.denom();
                }
                acc = next;
            }
            let coeffs = acc.into_iter().map(|a| Scalar::Exact(BigRational::new(a, den.clone()))).collect();
            return Jet::from_taylor(inner.base.clone(), coeffs);
        }
        let mut acc = vec![Scalar::zero(); n + 1];
        acc[0] = o[n].clone();
        for k in (0..n).rev() {
            acc = series_mul(&acc, &t, n + 1);
            acc[0] = &acc[0] + &o[k];
        }
        Jet::from_taylor(inner.base.clone(), acc)
    }

    /// Jet of the compositional inverse, based at `f(x0)`.
    pub fn invert(&self) -> Result<Jet> {
        if self.order() == 0 {
            return Err(Error::OrderShortfall { needed: 1, have: 0 });
        }
        if self.derivs[1].is_zero() {
            return Err(Error::CriticalPoint(self.base.to_string()));
        }
        let n = self.order();
        let a = self.taylor();
        // Lagrange: b_m = [t^(m-1)] h^m / m with h = t / (f(x0+t) - f(x0)).
        let h = series_recip(&a[1..])?;
        let mut b = vec![self.base.clone()];
        let mut hp = vec![Scalar::one()];
        for m in 1..=n {
            hp = series_mul(&hp, &h, n);
            b.push(&hp[m - 1] / &Scalar::int(m as i64));
        }
        Jet::from_taylor(self.value().clone(), b)
    }

    pub fn reciprocal(&self) -> Result<Jet> {
        if self.value().is_zero() {
            return Err(Error::Domain(format!("reciprocal of a jet vanishing at {}", self.base)));
        }
        Jet::from_taylor(self.base.clone(), series_recip(&self.taylor())?)
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.mul(&other.reciprocal()?)
    }

    /// Power with a rational (or float) exponent. Non-negative integer
    /// exponents work at any value; otherwise the value must be nonzero, and
    /// positive for fractional exponents. Exact jets whose leading power is
    /// irrational give [`Error::Inexact`].
    pub fn pow(&self, e: &Scalar) -> Result<Jet> {
        let int_exp = e.as_i64().or_else(|| {
            let v = e.to_f64();
            (v.fract() == 0.0 && v.abs() < 1e6).then_some(v as i64)
        });
        if let Some(k) = int_exp {
            if k >= 0 {
                return self.powi(k as u64);
            }
        }
        let a0 = self.value().clone();
        if a0.is_zero() {
            return Err(Error::Domain(format!("power {e} of a jet vanishing at {}", self.base)));
        }
        let b0 = a0.pow(e)?;
        let a = self.taylor();
        let inv_a0 = a0.recip()?;
        let e1 = e + &Scalar::one();
        let mut b = vec![b0];
        for n in 1..a.len() {
            let mut acc = Scalar::zero();
            for k in 1..=n {
                if a[k].is_zero() {
                    continue;
                }
                let w = &(&e1 * &Scalar::int(k as i64)) - &Scalar::int(n as i64);
                acc = acc + &(&w * &a[k]) * &b[n - k];
            }
            b.push(&(&acc * &inv_a0) / &Scalar::int(n as i64));
        }
        Jet::from_taylor(self.base.clone(), b)
    }

    /// [`Jet::pow`] with a float fallback when the exact result is irrational.
    pub fn pow_or_float(&self, e: &Scalar) -> Result<Jet> {
        match self.pow(e) {
            Err(Error::Inexact(_)) => self.to_float().pow(e),
            other => other,
        }
    }

    pub fn powi(&self, mut k: u64) -> Result<Jet> {
        let mut acc = Jet::constant(self.base.clone(), Scalar::one(), self.order());
        let mut sq = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&sq)?;
            }
            k >>= 1;
            if k > 0 {
                sq = sq.mul(&sq)?;
            }
        }
        Ok(acc)
    }

    pub fn exp(&self) -> Result<Jet> {
        let v = self.value();
        let ev = if v.is_exact() && v.is_zero() { Scalar::one() } else { Scalar::float(v.to_f64().exp()) };
        let outer = Jet::new(v.clone(), vec![ev; self.order() + 1])?;
        Jet::compose(&outer, self)
    }

    pub fn log(&self) -> Result<Jet> {
        let v = self.value().clone();
        if v.signum() <= 0 {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        let lv = if v.is_one() && v.is_exact() { Scalar::zero() } else { Scalar::float(v.to_f64().ln()) };
        let mut derivs = vec![lv];
        // d^k log(y) = (-1)^(k-1) (k-1)! / y^k
        let mut p = v.recip()?;
        let inv = p.clone();
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { Scalar::one() } else { Scalar::int(-1) };
            derivs.push(&(&sign * &factorial(k as u32 - 1)) * &p);
            p = &p * &inv;
        }
        Jet::compose(&Jet::new(v, derivs)?, self)
    }

    fn trig(&self, shift: usize) -> Result<Jet> {
        let v = self.value();
        let (s, c) = if v.is_exact() && v.is_zero() {
            (Scalar::zero(), Scalar::one())
        } else {
            let x = v.to_f64();
            (Scalar::float(x.sin()), Scalar::float(x.cos()))
        };
        let cycle = [s.clone(), c.clone(), -&s, -&c];
        let derivs = (0..=self.order()).map(|k| cycle[(k + shift) % 4].clone()).collect();
        Jet::compose(&Jet::new(v.clone(), derivs)?, self)
    }

    pub fn sin(&self) -> Result<Jet> {
        self.trig(0)
    }

    pub fn cos(&self) -> Result<Jet> {
        self.trig(1)
    }

    pub fn tan(&self) -> Result<Jet> {
        let c = self.cos()?;
        if c.value().is_zero() {
            return Err(Error::Domain("tan at a pole".into()));
        }
        self.sin()?.div(&c)
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.pow_or_float(&Scalar::ratio(1, 2))
    }

    /// Largest absolute difference over the shared derivative range.
    pub fn max_abs_diff(&self, other: &Jet) -> Result<Scalar> {
        Ok(Scalar::max_abs(self.sub(other)?.derivs()))
    }

    /// Largest absolute entry (scale reference for relative tolerances).
    pub fn max_abs(&self) -> Scalar {
        Scalar::max_abs(&self.derivs)
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.derivs.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::ratio(n, d)
    }

    fn ints(v: &[i64]) -> Vec<Scalar> {
        v.iter().map(|&n| Scalar::int(n)).collect()
    }

    #[test]
    fn square_of_x() {
        let x = Jet::identity(Scalar::one(), 2);
        assert_eq!(x.mul(&x).unwrap().derivs(), ints(&[1, 2, 2]).as_slice());
    }

    #[test]
    fn sin_times_cos() {
        let x = Jet::identity(Scalar::zero(), 3);
        let p = x.sin().unwrap().mul(&x.cos().unwrap()).unwrap();
        assert!(p.is_exact());
        assert_eq!(p.derivs(), ints(&[0, 1, 0, -4]).as_slice());
    }

    #[test]
    fn derive_exp() {
        let e = Jet::identity(Scalar::zero(), 5).exp().unwrap();
        let d = e.derive().unwrap();
        assert_eq!(d, e.truncate(4).unwrap());
        assert!(Jet::constant(Scalar::one(), Scalar::int(3), 2).derive().unwrap().is_zero());
        assert!(Jet::constant(Scalar::one(), Scalar::int(3), 0).derive().is_err());
    }

    #[test]
    fn exp_after_log() {
        let l = Jet::identity(Scalar::one(), 6).log().unwrap();
        let e = Jet::identity(Scalar::zero(), 6).exp().unwrap();
        let id = Jet::compose(&e, &l).unwrap();
        assert_eq!(id, Jet::identity(Scalar::one(), 6));
    }

    #[test]
    fn compose_square_shift() {
        // x^2 at 2 composed with x + 1 at 1
        let sq = Jet::new(Scalar::int(2), ints(&[4, 4, 2, 0])).unwrap();
        let sh = Jet::new(Scalar::int(1), ints(&[2, 1, 0, 0])).unwrap();
        assert_eq!(Jet::compose(&sq, &sh).unwrap().derivs(), ints(&[4, 4, 2, 0]).as_slice());
        assert!(Jet::compose(&sq, &Jet::identity(Scalar::int(5), 3)).is_err());
    }

    #[test]
    fn invert_examples() {
        let two_x = Jet::new(Scalar::zero(), ints(&[0, 2, 0, 0])).unwrap();
        assert_eq!(two_x.invert().unwrap().derivs(), &[Scalar::zero(), q(1, 2), Scalar::zero(), Scalar::zero()]);
        let f = Jet::new(Scalar::zero(), ints(&[0, 1, 2, 0])).unwrap();
        assert_eq!(f.invert().unwrap().derivs(), ints(&[0, 1, -2, 12]).as_slice());
        let crit = Jet::new(Scalar::zero(), ints(&[0, 0, 2])).unwrap();
        assert!(matches!(crit.invert(), Err(Error::CriticalPoint(_))));
    }

    #[test]
    fn pow_examples() {
        let f = Jet::new(Scalar::zero(), ints(&[1, 1, 0])).unwrap();
        assert_eq!(f.pow(&q(1, 2)).unwrap().derivs(), &[Scalar::one(), q(1, 2), q(-1, 4)]);
        assert_eq!(f.pow(&Scalar::one()).unwrap(), f);
        let two = Jet::constant(Scalar::zero(), Scalar::int(2), 3);
        assert_eq!(two.reciprocal().unwrap(), Jet::constant(Scalar::zero(), q(1, 2), 3));
        assert!(Jet::zero(Scalar::zero(), 2).reciprocal().is_err());
        let neg = Jet::constant(Scalar::zero(), Scalar::int(-4), 2);
        assert!(neg.pow(&q(1, 2)).is_err());
        let irr = Jet::constant(Scalar::zero(), Scalar::int(2), 2);
        assert!(matches!(irr.pow(&q(1, 2)), Err(Error::Inexact(_))));
        assert!(!irr.pow_or_float(&q(1, 2)).unwrap().is_exact());
    }

    #[test]
    fn tan_series() {
        let t = Jet::identity(Scalar::zero(), 5).tan().unwrap();
        assert_eq!(t.derivs(), ints(&[0, 1, 0, 2, 0, 16]).as_slice());
    }
}
