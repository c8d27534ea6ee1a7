//! Tensor densities, vector fields and linear differential operators, with
//! the diffeomorphism action realized on jets.
//!
//! Two directions appear throughout. The pullback by `g` sends a density
//! `φ (dx)^λ` to `φ∘g · (g')^λ` and an operator `A` to
//! `g*_μ ∘ A ∘ (g*_λ)^(-1)`. The pushforward by `f` is the pullback by
//! `f^(-1)`, which is the action `f_{λ,μ}` on `D_{λ,μ}`.

use crate::error::{Error, Result};
use crate::expr::{Diffeo, Expr};
use crate::jets::Jet;
use crate::numeric::{factorial, Scalar};

/// `φ(x) (dx)^λ`.
#[derive(Clone, Debug)]
pub struct Density {
    pub weight: Scalar,
    pub profile: Expr,
}

impl Density {
    pub fn new(weight: Scalar, profile: Expr) -> Self {
        Density { weight, profile }
    }

    pub fn jet_at(&self, x0: &Scalar, n: usize) -> Result<Jet> {
        self.profile.jet_at(x0, n)
    }
}

/// `X(x) d/dx`.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub profile: Expr,
}

impl VectorField {
    pub fn new(profile: Expr) -> Self {
        VectorField { profile }
    }

    /// The basis `1, x, x^2` of the Möbius subalgebra.
    pub fn sl2_basis() -> [VectorField; 3] {
        [VectorField::new(Expr::int(1)), VectorField::new(Expr::X), VectorField::new(Expr::X.powi(2))]
    }
}

/// `a_k d^k/dx^k + ... + a_0` acting `F_λ → F_μ`; `coeffs[i] = a_i`.
#[derive(Clone, Debug)]
pub struct LinDiffOp {
    pub lambda: Scalar,
    pub mu: Scalar,
    pub coeffs: Vec<Expr>,
}

impl LinDiffOp {
    pub fn new(lambda: Scalar, mu: Scalar, coeffs: Vec<Expr>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Shape("an operator needs at least one coefficient".into()));
        }
        Ok(LinDiffOp { lambda, mu, coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn jets_at(&self, x0: &Scalar, n: usize) -> Result<OpJets> {
        let coeffs = self.coeffs.iter().map(|a| a.jet_at(x0, n)).collect::<Result<_>>()?;
        Ok(OpJets { lambda: self.lambda.clone(), mu: self.mu.clone(), coeffs })
    }
}

/// Coefficient jets of an operator at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct OpJets {
    pub lambda: Scalar,
    pub mu: Scalar,
    pub coeffs: Vec<Jet>,
}

impl OpJets {
    pub fn new(lambda: Scalar, mu: Scalar, coeffs: Vec<Jet>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Shape("an operator needs at least one coefficient".into()));
        }
        let base = coeffs[0].base();
        if let Some(c) = coeffs.iter().find(|c| !crate::jets::same_point(c.base(), base)) {
            return Err(Error::BaseMismatch(base.to_string(), c.base().to_string()));
        }
        Ok(OpJets { lambda, mu, coeffs })
    }

    /// Differential order `k`.
    pub fn k(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Smallest jet order among the coefficients.
    pub fn order(&self) -> usize {
        self.coeffs.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn base(&self) -> &Scalar {
        self.coeffs[0].base()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Jet::is_zero)
    }

    pub fn is_exact(&self) -> bool {
        self.coeffs.iter().all(Jet::is_exact)
    }

    pub fn truncate(&self, n: usize) -> Result<OpJets> {
        let coeffs = self.coeffs.iter().map(|c| c.truncate(n)).collect::<Result<_>>()?;
        Ok(OpJets { coeffs, ..self.clone() })
    }

    /// Pads with zero coefficients up to differential order `k`.
    pub fn padded(&self, k: usize) -> OpJets {
        let mut out = self.clone();
        let (base, n) = (self.base().clone(), self.order());
        while out.coeffs.len() <= k {
            out.coeffs.push(Jet::zero(base.clone(), n));
        }
        out
    }

    fn zip(&self, other: &OpJets, op: impl Fn(&Jet, &Jet) -> Result<Jet>) -> Result<OpJets> {
        let k = self.k().max(other.k());
        let (a, b) = (self.padded(k), other.padded(k));
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| op(x, y)).collect::<Result<_>>()?;
        Ok(OpJets { lambda: self.lambda.clone(), mu: self.mu.clone(), coeffs })
    }

    pub fn add(&self, other: &OpJets) -> Result<OpJets> {
        self.zip(other, Jet::add)
    }

    pub fn sub(&self, other: &OpJets) -> Result<OpJets> {
        self.zip(other, Jet::sub)
    }

    pub fn scale(&self, c: &Scalar) -> OpJets {
        OpJets { coeffs: self.coeffs.iter().map(|j| j.scale(c)).collect(), ..self.clone() }
    }

    /// Largest absolute coefficient entry.
    pub fn max_abs(&self) -> Scalar {
        Scalar::max_abs(self.coeffs.iter().flat_map(|j| j.derivs()))
    }

    pub fn max_abs_diff(&self, other: &OpJets) -> Result<Scalar> {
        Ok(self.sub(other)?.max_abs())
    }
}

/// `φ∘g · (g')^w` as a jet at the base of `g`; `phi` is based at `g(y0)`.
pub fn pull_density_jet(g: &Jet, phi: &Jet, w: &Scalar) -> Result<Jet> {
    let n = phi.order().min(g.order().saturating_sub(1));
    if g.order() < 1 {
        return Err(Error::OrderShortfall { needed: 1, have: g.order() });
    }
    let gt = g.truncate(n + 1)?;
    let comp = Jet::compose(&phi.truncate(n)?, &gt.truncate(n)?)?;
    let gp = gt.derive()?;
    if gp.value().is_zero() {
        return Err(Error::CriticalPoint(g.base().to_string()));
    }
    comp.mul(&gp.pow_or_float(w)?)
}

/// Pushforward of a density jet at `y0` along `f` (given by its jet at
/// `y0`); the result is based at `f(y0)`.
pub fn push_density_jet(f: &Jet, phi: &Jet, w: &Scalar) -> Result<Jet> {
    pull_density_jet(&f.invert()?, phi, w)
}

/// Recovers the coefficient jets of a `k`-th order operator from its values
/// on the probes `(y - y0)^j`, `j = 0..k`. The probe jets handed to `apply`
/// have order `n + k`; `apply` must return jets of order at least `n`.
pub fn probe_recover(apply: impl Fn(&Jet) -> Result<Jet>, k: usize, y0: &Scalar, n: usize) -> Result<Vec<Jet>> {
    let mut b: Vec<Jet> = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let probe = Jet::monomial(y0.clone(), j, n + k);
        let mut val = apply(&probe)?.truncate(n)?;
        let jf = factorial(j as u32);
        for (i, bi) in b.iter().enumerate() {
            let c = &jf / &factorial((j - i) as u32);
            let mono = Jet::monomial(y0.clone(), j - i, n);
            val = val.sub(&bi.mul(&mono)?.scale(&c))?;
        }
        b.push(val.scale(&jf.recip()?));
    }
    Ok(b)
}

/// Order demand of [`pull_op_jets`] on the map jet for a `k`-th order
/// operator at output order `n`.
pub fn pull_op_demand(k: usize, n: usize) -> usize {
    n + k + 1
}

/// Pullback `g*_μ ∘ A ∘ (g*_λ)^(-1)` of an operator given by coefficient jets
/// at `g(y0)`. The output order is `min(a.order(), g.order() - k - 1)`.
///
/// Internally `B = (g')^(μ-λ) Σ (a_i∘g) E^i` with `E = (1/g')(∂ - λ g''/g')`,
/// which keeps every factor rational when `μ - λ` is an integer.
pub fn pull_op_jets(g: &Jet, a: &OpJets) -> Result<OpJets> {
    let k = a.k();
    if g.order() < k + 1 {
        return Err(Error::OrderShortfall { needed: k + 1, have: g.order() });
    }
    let n = a.order().min(g.order() - k - 1);
    let y0 = g.base().clone();
    let gp = g.derive()?;
    if gp.value().is_zero() {
        return Err(Error::CriticalPoint(y0.to_string()));
    }
    let inv_gp = gp.reciprocal()?;
    let ell = gp.derive()?.mul(&inv_gp)?;
    let g_n = g.truncate(n)?;
    let pulled: Vec<Jet> = a.coeffs.iter().map(|c| Jet::compose(&c.truncate(n)?, &g_n)).collect::<Result<_>>()?;
    let pref = gp.truncate(n)?.pow_or_float(&(&a.mu - &a.lambda))?;
    let lambda = a.lambda.clone();
    let apply = |psi: &Jet| -> Result<Jet> {
        let mut acc = pulled[0].mul(&psi.truncate(n)?)?;
        let mut t = psi.clone();
        for p in pulled.iter().skip(1) {
            let d = t.derive()?;
            t = d.sub(&ell.mul(&t)?.scale(&lambda))?.mul(&inv_gp)?;
            acc = acc.add(&p.mul(&t.truncate(n)?)?)?;
        }
        acc.mul(&pref)
    };
    let coeffs = probe_recover(apply, k, &y0, n)?;
    Ok(OpJets { lambda: a.lambda.clone(), mu: a.mu.clone(), coeffs })
}

/// Pushforward of operator jets at `y0` along `f` (its jet at `y0`); the
/// result is based at `f(y0)`.
pub fn push_op_jets(f: &Jet, a: &OpJets) -> Result<OpJets> {
    pull_op_jets(&f.invert()?, a)
}

/// `f*_λ φ = φ∘f^(-1) · ((f^(-1))')^λ` at `x0`.
pub fn act_density(f: &Diffeo, phi: &Density, x0: &Scalar, n: usize) -> Result<Jet> {
    let y0 = f.preimage(x0)?;
    act_density_at_preimage(f, phi, &y0, n)
}

/// [`act_density`] evaluated at `f(y0)`; exact whenever `f` and `φ` are
/// rational at `y0`.
pub fn act_density_at_preimage(f: &Diffeo, phi: &Density, y0: &Scalar, n: usize) -> Result<Jet> {
    let fj = f.jet_at(y0, n + 1)?;
    push_density_jet(&fj, &phi.jet_at(y0, n)?, &phi.weight)
}

/// Coefficient jets at `x0` of `f_{λ,μ}(A) = f*_μ ∘ A ∘ (f*_λ)^(-1)`.
pub fn act_op(f: &Diffeo, a: &LinDiffOp, x0: &Scalar, n: usize) -> Result<OpJets> {
    let y0 = f.preimage(x0)?;
    act_op_at_preimage(f, a, &y0, n)
}

/// [`act_op`] evaluated at `f(y0)`.
pub fn act_op_at_preimage(f: &Diffeo, a: &LinDiffOp, y0: &Scalar, n: usize) -> Result<OpJets> {
    let fj = f.jet_at(y0, pull_op_demand(a.order(), n))?;
    push_op_jets(&fj, &a.jets_at(y0, n)?)
}

/// `L_X φ = X φ' + λ X' φ`.
pub fn lie_derivative(x: &VectorField, phi: &Density) -> Density {
    let p = &phi.profile;
    let profile = x.profile.clone() * p.derive() + Expr::Num(phi.weight.clone()) * x.profile.derive() * p.clone();
    Density::new(phi.weight.clone(), profile)
}

/// Jet form of the Lie derivative; the order drops by one.
pub fn lie_derivative_jet(x: &Jet, phi: &Jet, w: &Scalar) -> Result<Jet> {
    x.mul(&phi.derive()?)?.add(&x.derive()?.mul(phi)?.scale(w))
}

/// `[X, Y] = X Y' - X' Y`.
pub fn commutator(x: &VectorField, y: &VectorField) -> VectorField {
    let (p, q) = (&x.profile, &y.profile);
    VectorField::new(p.clone() * q.derive() - p.derive() * q.clone())
}

pub fn commutator_jet(x: &Jet, y: &Jet) -> Result<Jet> {
    x.mul(&y.derive()?)?.sub(&x.derive()?.mul(y)?)
}

/// `Σ a_i φ^(i)` at `x0`; the density jet is taken at order `n + k`.
pub fn apply_op(a: &LinDiffOp, phi: &Density, x0: &Scalar, n: usize) -> Result<Jet> {
    apply_op_jets(&a.jets_at(x0, n)?, &phi.jet_at(x0, n + a.order())?)
}

/// Jet form of [`apply_op`]; needs `phi` of order at least `k`.
pub fn apply_op_jets(a: &OpJets, phi: &Jet) -> Result<Jet> {
    let k = a.k();
    if phi.order() < k {
        return Err(Error::OrderShortfall { needed: k, have: phi.order() });
    }
    let n = a.order().min(phi.order() - k);
    let mut acc = Jet::zero(phi.base().clone(), n);
    for (i, c) in a.coeffs.iter().enumerate() {
        acc = acc.add(&c.truncate(n)?.mul(&phi.derive_n(i)?.truncate(n)?)?)?;
    }
    Ok(acc)
}

/// Infinitesimal action of a vector field on `D_{λ,μ}`:
/// `b_n = L^{μ-λ-n}_Z a_n - Σ_{j>n} [C(j,n-1) + λ C(j,n)] Z^(j-n+1) a_j`.
pub fn op_lie_derivative_jets(z: &Jet, a: &OpJets) -> Result<OpJets> {
    let k = a.k();
    let delta = &a.mu - &a.lambda;
    if z.order() < k + 1 {
        return Err(Error::OrderShortfall { needed: k + 1, have: z.order() });
    }
    let n_out = (a.order().saturating_sub(1)).min(z.order() - k - 1);
    let mut coeffs = Vec::with_capacity(k + 1);
    for n in 0..=k {
        let w = &delta - &Scalar::int(n as i64);
        let mut b = lie_derivative_jet(z, &a.coeffs[n], &w)?.truncate(n_out)?;
        for j in n + 1..=k {
            let c = &binom_or_zero(j, n as i64 - 1) + &(&a.lambda * &binom_or_zero(j, n as i64));
            let zd = z.derive_n(j - n + 1)?.truncate(n_out)?;
            b = b.sub(&zd.mul(&a.coeffs[j].truncate(n_out)?)?.scale(&c))?;
        }
        coeffs.push(b);
    }
    Ok(OpJets { lambda: a.lambda.clone(), mu: a.mu.clone(), coeffs })
}

fn binom_or_zero(n: usize, k: i64) -> Scalar {
    if k < 0 {
        Scalar::zero()
    } else {
        crate::numeric::binomial(n as u32, k as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Mobius};

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::ratio(n, d)
    }

    fn poly_map() -> Diffeo {
        Diffeo::expr(parse("x + x^3/5 + x^2/3").unwrap())
    }

    #[test]
    fn translation_density() {
        let f = Diffeo::Mobius(Mobius::translation(Scalar::int(3)));
        let phi = Density::new(q(5, 2), parse("x^2 + 1").unwrap());
        let x0 = q(7, 2);
        let got = act_density(&f, &phi, &x0, 4).unwrap();
        let want = parse("(x - 3)^2 + 1").unwrap().jet_at(&x0, 4).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn weight_zero_density() {
        let f = Diffeo::with_inverse(parse("2*x + 1").unwrap(), parse("(x - 1)/2").unwrap());
        let phi = Density::new(Scalar::zero(), parse("x^3").unwrap());
        let x0 = q(1, 3);
        let got = act_density(&f, &phi, &x0, 3).unwrap();
        let want = parse("((x - 1)/2)^3").unwrap().jet_at(&x0, 3).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn inversion_density_value() {
        let f = Diffeo::parse("mobius(0,1,1,0)").unwrap();
        let phi = Density::new(Scalar::one(), Expr::int(1));
        let got = act_density(&f, &phi, &Scalar::int(2), 2).unwrap();
        assert_eq!(got.value(), &q(-1, 4));
    }

    #[test]
    fn density_group_law() {
        let f = poly_map();
        let g = Diffeo::expr(parse("x + x^2/4 + x^4/9").unwrap());
        let phi = Density::new(Scalar::int(2), parse("1 + x^2").unwrap());
        let y0 = q(1, 5);
        let n = 5;
        // pushforward along g then f, versus along f∘g
        let gj = g.jet_at(&y0, n + 2).unwrap();
        let step1 = push_density_jet(&gj, &phi.jet_at(&y0, n + 1).unwrap(), &phi.weight).unwrap();
        let fj = f.jet_at(gj.value(), n + 2).unwrap();
        let step2 = push_density_jet(&fj, &step1, &phi.weight).unwrap();
        let fg = f.compose(&g);
        let direct = act_density_at_preimage(&fg, &phi, &y0, n).unwrap();
        assert_eq!(step2.truncate(n).unwrap(), direct);
    }

    #[test]
    fn lie_derivative_examples() {
        let phi = Density::new(q(2, 3), parse("x^4").unwrap());
        let t = lie_derivative(&VectorField::new(Expr::int(1)), &phi);
        assert_eq!(t.profile.eval(&Scalar::int(2)).unwrap(), Scalar::int(32));
        let d = lie_derivative(&VectorField::new(Expr::X), &phi);
        let x0 = q(3, 7);
        let want = &(&Scalar::int(4) + &q(2, 3)) * &x0.powi(4).unwrap();
        assert_eq!(d.profile.eval(&x0).unwrap(), want);
        // L_X Y - L_Y X = 2[X, Y] for vector fields (weight -1)
        let (x, y) = (parse("x^2 + 1").unwrap(), parse("x^3").unwrap());
        let lxy = lie_derivative(&VectorField::new(x.clone()), &Density::new(Scalar::int(-1), y.clone()));
        let lyx = lie_derivative(&VectorField::new(y.clone()), &Density::new(Scalar::int(-1), x.clone()));
        let br = commutator(&VectorField::new(x), &VectorField::new(y));
        let x0 = q(2, 5);
        let lhs = &lxy.profile.eval(&x0).unwrap() - &lyx.profile.eval(&x0).unwrap();
        assert_eq!(lhs, &Scalar::int(2) * &br.profile.eval(&x0).unwrap());
    }

    #[test]
    fn commutator_examples() {
        let c = commutator(&VectorField::new(Expr::int(1)), &VectorField::new(Expr::X));
        assert_eq!(c.profile.eval(&q(5, 3)).unwrap(), Scalar::one());
        let c = commutator(&VectorField::new(Expr::X), &VectorField::new(Expr::X.powi(2)));
        assert_eq!(c.profile.eval(&q(5, 3)).unwrap(), q(25, 9));
        let x = VectorField::new(parse("sin(x) + x^2").unwrap());
        let c = commutator(&x, &x);
        assert_eq!(c.profile.eval(&Scalar::float(0.3)).unwrap().to_f64(), 0.0);
    }

    #[test]
    fn apply_examples() {
        let d = LinDiffOp::new(Scalar::zero(), Scalar::one(), vec![Expr::int(0), Expr::int(1)]).unwrap();
        let phi = Density::new(Scalar::zero(), parse("x^2").unwrap());
        let x0 = q(3, 4);
        assert_eq!(apply_op(&d, &phi, &x0, 3).unwrap(), parse("2*x").unwrap().jet_at(&x0, 3).unwrap());
        let bol2 = LinDiffOp::new(q(-1, 2), q(3, 2), vec![Expr::int(0), Expr::int(0), Expr::int(1)]).unwrap();
        let cube = Density::new(q(-1, 2), parse("x^3").unwrap());
        let got = apply_op(&bol2, &cube, &Scalar::one(), 3).unwrap();
        assert_eq!(got.derivs(), &[Scalar::int(6), Scalar::int(6), Scalar::zero(), Scalar::zero()]);
        let u = parse("x^2 - 1").unwrap();
        let mult = LinDiffOp::new(Scalar::zero(), Scalar::zero(), vec![u.clone()]).unwrap();
        let phi = Density::new(Scalar::zero(), parse("x + 2").unwrap());
        let want = (u * parse("x + 2").unwrap()).jet_at(&x0, 4).unwrap();
        assert_eq!(apply_op(&mult, &phi, &x0, 4).unwrap(), want);
        assert!(apply_op_jets(&bol2.jets_at(&x0, 3).unwrap(), &phi.jet_at(&x0, 1).unwrap()).is_err());
    }

    #[test]
    fn probe_recovery_is_exact() {
        let a = LinDiffOp::new(
            q(1, 3),
            q(7, 3),
            vec![parse("x^2").unwrap(), parse("1/(1+x^2)").unwrap(), parse("x - 5").unwrap()],
        )
        .unwrap();
        let x0 = q(2, 7);
        let aj = a.jets_at(&x0, 6).unwrap();
        let rec = probe_recover(|p| apply_op_jets(&aj, p), 2, &x0, 6).unwrap();
        assert_eq!(rec, aj.coeffs);
    }

    #[test]
    fn identity_action() {
        let a = LinDiffOp::new(q(1, 2), q(5, 2), vec![parse("x").unwrap(), parse("x^2+2").unwrap()]).unwrap();
        let x0 = q(-2, 3);
        let got = act_op(&Diffeo::identity(), &a, &x0, 5).unwrap();
        assert_eq!(got, a.jets_at(&x0, 5).unwrap());
    }

    #[test]
    fn op_group_law() {
        let f = poly_map();
        let g = Diffeo::expr(parse("x + x^2/4 + x^4/9").unwrap());
        let a = LinDiffOp::new(
            q(1, 3),
            q(7, 3),
            vec![parse("x^2").unwrap(), parse("x + 3").unwrap(), parse("2 - x").unwrap()],
        )
        .unwrap();
        let y0 = q(1, 5);
        let n = 3;
        let gj = g.jet_at(&y0, 2 * (n + 3) + 3).unwrap();
        let once = push_op_jets(&gj, &a.jets_at(&y0, n + 3).unwrap()).unwrap();
        let fj = f.jet_at(gj.value(), n + 3).unwrap();
        let twice = push_op_jets(&fj, &once).unwrap();
        let direct = act_op_at_preimage(&f.compose(&g), &a, &y0, n).unwrap();
        assert_eq!(twice.truncate(n).unwrap(), direct);
    }

    #[test]
    fn pull_and_push_are_inverse() {
        let g = poly_map();
        let a = LinDiffOp::new(
            q(-1, 2),
            q(5, 2),
            vec![parse("x").unwrap(), parse("1").unwrap(), parse("x^2").unwrap(), parse("3").unwrap()],
        )
        .unwrap();
        let y0 = q(1, 2);
        let gj = g.jet_at(&y0, 14).unwrap();
        let aj = a.jets_at(gj.value(), 8).unwrap();
        let pulled = pull_op_jets(&gj, &aj).unwrap();
        let back = push_op_jets(&gj.truncate(pulled.order() + 4).unwrap(), &pulled).unwrap();
        assert_eq!(back, aj.truncate(back.order()).unwrap());
    }

    #[test]
    fn order_shortfall() {
        let gj = poly_map().jet_at(&Scalar::zero(), 2).unwrap();
        let a = LinDiffOp::new(
            Scalar::zero(),
            Scalar::int(3),
            vec![Expr::int(0), Expr::int(0), Expr::int(0), Expr::int(1)],
        )
        .unwrap();
        assert!(matches!(
            pull_op_jets(&gj, &a.jets_at(&Scalar::zero(), 4).unwrap()),
            Err(Error::OrderShortfall { .. })
        ));
    }
}
