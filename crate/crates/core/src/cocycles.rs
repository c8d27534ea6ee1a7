//! The Schwarzian derivative, the operator-valued cocycles built from it,
//! Bol operators and their coboundaries, and the Sturm–Liouville examples.
//!
//! Cocycle convention: `C(f∘g) = ρ_g(C(f)) + C(g)` where `ρ_g` is the
//! pullback of operators ([`crate::modules::pull_op_jets`]). On order-zero
//! operators `ρ_g` is `a ↦ a∘g · (g')^(μ-λ)`, so for `S` this is the classical
//! chain rule for the Schwarzian. Coboundaries are `δB(f) = ρ_f(B) - B`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expr::{Diffeo, Expr};
use crate::jets::Jet;
use crate::modules::{pull_op_demand, pull_op_jets, LinDiffOp, OpJets};
use crate::numeric::{binomial, Scalar};

/// `S(f) = f'''/f' - 3/2 (f''/f')^2`; the output order is three less.
pub fn schwarzian_jet(f: &Jet) -> Result<Jet> {
    if f.order() < 3 {
        return Err(Error::OrderShortfall { needed: 3, have: f.order() });
    }
    let d1 = f.derive()?;
    if d1.value().is_zero() {
        return Err(Error::CriticalPoint(f.base().to_string()));
    }
    let n = f.order() - 3;
    let inv = d1.truncate(n + 1)?.reciprocal()?;
    let l = f.derive_n(2)?.mul(&inv)?; // f''/f'
    let t = f.derive_n(3)?.mul(&inv.truncate(n)?)?;
    t.sub(&l.truncate(n)?.powi(2)?.scale(&Scalar::ratio(3, 2)))
}

/// Jet of `S(f)` at `x0` to order `n` (reads `f` to order `n + 3`).
pub fn schwarzian(f: &Diffeo, x0: &Scalar, n: usize) -> Result<Jet> {
    schwarzian_jet(&f.jet_at(x0, n + 3)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CocycleTag {
    S,
    T,
    U,
    V0,
    Vm4,
    Log0,
    Log1,
}

impl CocycleTag {
    pub const ALL: [CocycleTag; 7] = [
        CocycleTag::S,
        CocycleTag::T,
        CocycleTag::U,
        CocycleTag::V0,
        CocycleTag::Vm4,
        CocycleTag::Log0,
        CocycleTag::Log1,
    ];

    /// Families that vanish on Möbius maps.
    pub const PROJECTIVE: [CocycleTag; 5] =
        [CocycleTag::S, CocycleTag::T, CocycleTag::U, CocycleTag::V0, CocycleTag::Vm4];
}

impl fmt::Display for CocycleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CocycleTag::S => "S",
            CocycleTag::T => "T",
            CocycleTag::U => "U",
            CocycleTag::V0 => "V0",
            CocycleTag::Vm4 => "Vm4",
            CocycleTag::Log0 => "LOG0",
            CocycleTag::Log1 => "LOG1",
        })
    }
}

impl FromStr for CocycleTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "S" => CocycleTag::S,
            "T" => CocycleTag::T,
            "U" => CocycleTag::U,
            "V0" => CocycleTag::V0,
            "VM4" | "V-4" => CocycleTag::Vm4,
            "LOG0" => CocycleTag::Log0,
            "LOG1" => CocycleTag::Log1,
            _ => return Err(Error::Parse { pos: 0, msg: format!("unknown cocycle family `{s}`") }),
        })
    }
}

/// A cocycle family with its source weight.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleFamily {
    pub tag: CocycleTag,
    lambda: Scalar,
}

impl CocycleFamily {
    /// `lambda` is ignored for `V0` and `Vm4`, whose weights are fixed.
    pub fn new(tag: CocycleTag, lambda: Scalar) -> Self {
        let lambda = match tag {
            CocycleTag::V0 => Scalar::zero(),
            CocycleTag::Vm4 => Scalar::int(-4),
            _ => lambda,
        };
        CocycleFamily { tag, lambda }
    }

    /// `(λ, μ)` of the target module `D_{λ,μ}`.
    pub fn weights(&self) -> (Scalar, Scalar) {
        let l = self.lambda.clone();
        let shift = match self.tag {
            CocycleTag::S => 2,
            CocycleTag::T => 3,
            CocycleTag::U => 4,
            CocycleTag::V0 | CocycleTag::Vm4 => 5,
            CocycleTag::Log0 => 0,
            CocycleTag::Log1 => 1,
        };
        let mu = &l + &Scalar::int(shift);
        (l, mu)
    }

    /// Differential order of the operator values.
    pub fn op_order(&self) -> usize {
        match self.tag {
            CocycleTag::S | CocycleTag::Log0 | CocycleTag::Log1 => 0,
            CocycleTag::T => 1,
            CocycleTag::U => 2,
            CocycleTag::V0 | CocycleTag::Vm4 => 3,
        }
    }

    /// Extra jet order consumed when evaluating on a map jet.
    pub fn demand(&self) -> usize {
        match self.tag {
            CocycleTag::S => 3,
            CocycleTag::T => 4,
            CocycleTag::U | CocycleTag::V0 => 5,
            CocycleTag::Vm4 => 6,
            CocycleTag::Log0 => 1,
            CocycleTag::Log1 => 2,
        }
    }

    /// `LOG0` (multiplication by `f'`) satisfies the chain rule
    /// multiplicatively rather than additively.
    pub fn is_multiplicative(&self) -> bool {
        self.tag == CocycleTag::Log0
    }

    /// Coefficient jets of `C(f)` at the base of `f`; the output order is
    /// `f.order() - demand()`.
    pub fn evaluate_jet(&self, f: &Jet) -> Result<OpJets> {
        let d = self.demand();
        if f.order() < d {
            return Err(Error::OrderShortfall { needed: d, have: f.order() });
        }
        let n = f.order() - d;
        let (lambda, mu) = self.weights();
        let q = Scalar::ratio;
        let coeffs = match self.tag {
            CocycleTag::Log0 => vec![f.derive()?.truncate(n)?],
            CocycleTag::Log1 => {
                let d1 = f.derive()?;
                vec![d1.derive()?.div(&d1)?.truncate(n)?]
            }
            _ => {
                let s = schwarzian_jet(f)?;
                let ds = |i: usize| -> Result<Jet> { s.derive_n(i)?.truncate(n) };
                let s2 = || -> Result<Jet> { ds(0)?.powi(2) };
                let l = &lambda;
                match self.tag {
                    CocycleTag::S => vec![ds(0)?],
                    CocycleTag::T => vec![ds(1)?.scale(&(-l * &q(1, 2))), ds(0)?],
                    CocycleTag::U => {
                        let two_l1 = &(l * &Scalar::int(2)) + &Scalar::one();
                        let c0 = &(l * &two_l1) / &Scalar::int(10);
                        let c1 = -(&(l * &(l + &Scalar::int(3))) / &Scalar::int(5));
                        let a0 = ds(2)?.scale(&c0).add(&s2()?.scale(&c1))?;
                        vec![a0, ds(1)?.scale(&-(&two_l1 * &q(1, 2))), ds(0)?]
                    }
                    CocycleTag::V0 => vec![
                        Jet::zero(f.base().clone(), n),
                        ds(2)?.scale(&q(3, 10)).sub(&s2()?.scale(&q(4, 5)))?,
                        ds(1)?.scale(&q(-3, 2)),
                        ds(0)?,
                    ],
                    CocycleTag::Vm4 => vec![
                        ds(3)?.scale(&q(14, 5)).sub(&ds(1)?.mul(&ds(0)?)?.scale(&q(8, 5)))?,
                        ds(2)?.scale(&q(63, 10)).sub(&s2()?.scale(&q(4, 5)))?,
                        ds(1)?.scale(&q(9, 2)),
                        ds(0)?,
                    ],
                    _ => unreachable!(),
                }
            }
        };
        OpJets::new(lambda, mu, coeffs)
    }

    /// `C(f)` at `x0` to order `n`.
    pub fn evaluate(&self, f: &Diffeo, x0: &Scalar, n: usize) -> Result<OpJets> {
        self.evaluate_jet(&f.jet_at(x0, n + self.demand())?)
    }
}

impl fmt::Display for CocycleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag {
            CocycleTag::V0 | CocycleTag::Vm4 => write!(f, "{}", self.tag),
            _ => write!(f, "{}[{}]", self.tag, self.lambda),
        }
    }
}

/// The Bol operator `∂^k : F_{(1-k)/2} → F_{(1+k)/2}`.
pub fn bol(k: usize) -> LinDiffOp {
    let mut coeffs = vec![Expr::int(0); k + 1];
    coeffs[k] = Expr::int(1);
    let kk = k as i64;
    LinDiffOp::new(Scalar::ratio(1 - kk, 2), Scalar::ratio(1 + kk, 2), coeffs).expect("nonempty coefficients")
}

/// `δ(∂^k) = c_k · C_k`: the scale `c_k` and family `C_k` for `k = 2, 3, 4`.
pub fn bol_coboundary_family(k: usize) -> Option<(Scalar, CocycleFamily)> {
    Some(match k {
        2 => (Scalar::ratio(1, 2), CocycleFamily::new(CocycleTag::S, Scalar::ratio(-1, 2))),
        3 => (Scalar::int(2), CocycleFamily::new(CocycleTag::T, Scalar::int(-1))),
        4 => (Scalar::int(5), CocycleFamily::new(CocycleTag::U, Scalar::ratio(-3, 2))),
        _ => return None,
    })
}

/// `δB(f) = ρ_f(B) - B` at `y0` to order `n`.
pub fn coboundary(b: &LinDiffOp, f: &Diffeo, y0: &Scalar, n: usize) -> Result<OpJets> {
    let fj = f.jet_at(y0, pull_op_demand(b.order(), n))?;
    let pulled = pull_op_jets(&fj, &b.jets_at(fj.value(), n)?)?;
    pulled.sub(&b.jets_at(y0, n)?)
}

/// Samples where every map in `maps` is an admissible germ.
pub fn admissible_samples(maps: &[&Diffeo], samples: &[Scalar]) -> Vec<Scalar> {
    samples.iter().filter(|s| maps.iter().all(|m| m.admissible_at(s))).cloned().collect()
}

/// Both sides of the cocycle identity at `y0`: `C(f∘g)` and
/// `ρ_g(C(f)) + C(g)` (for `LOG0` the product `ρ_g(C(f))·C(g)`).
pub fn cocycle_sides(fam: &CocycleFamily, f: &Diffeo, g: &Diffeo, y0: &Scalar, n: usize) -> Result<(OpJets, OpJets)> {
    let k = fam.op_order();
    let d = fam.demand();
    let gj = g.jet_at(y0, (n + d).max(pull_op_demand(k, n)))?;
    let fj = f.jet_at(gj.value(), n + d)?;
    let fg = Jet::compose(&fj, &gj)?;
    let lhs = fam.evaluate_jet(&fg)?.truncate(n)?;
    let cg = fam.evaluate_jet(&gj)?.truncate(n)?;
    let transported = pull_op_jets(&gj, &fam.evaluate_jet(&fj)?)?.truncate(n)?;
    let rhs = if fam.is_multiplicative() {
        let prod = transported.coeffs[0].mul(&cg.coeffs[0])?;
        OpJets::new(lhs.lambda.clone(), lhs.mu.clone(), vec![prod])?
    } else {
        transported.add(&cg)?
    };
    Ok((lhs, rhs))
}

/// `C(f∘g) - ρ_g(C(f)) - C(g)` at `y0`, see [`cocycle_sides`].
pub fn cocycle_defect(fam: &CocycleFamily, f: &Diffeo, g: &Diffeo, y0: &Scalar, n: usize) -> Result<OpJets> {
    let (lhs, rhs) = cocycle_sides(fam, f, g, y0, n)?;
    lhs.sub(&rhs)
}

/// Largest [`cocycle_defect`] entry over the admissible samples.
pub fn cocycle_residual(fam: &CocycleFamily, f: &Diffeo, g: &Diffeo, samples: &[Scalar], n: usize) -> Result<Scalar> {
    let mut worst = Scalar::zero();
    for y0 in samples {
        if !g.admissible_at(y0) || !g.eval(y0).is_ok_and(|x| f.admissible_at(&x)) {
            continue;
        }
        let r = cocycle_defect(fam, f, g, y0, n)?.max_abs();
        worst = Scalar::max_abs([&worst, &r]);
    }
    Ok(worst)
}

/// Two solutions of `2ψ'' + uψ = 0` with `(ψ, ψ')(x0) = (1, 0)` and `(0, 1)`.
/// A `u` jet of order `n - 2` gives solution jets of order `n`.
pub fn sl_solve(u: &Jet) -> Result<(Jet, Jet)> {
    let n = u.order() + 2;
    let solve = |p0: Scalar, p1: Scalar| -> Result<Jet> {
        let mut psi = vec![p0, p1];
        for m in 0..=u.order() {
            let mut acc = Scalar::zero();
            for i in 0..=m {
                acc = acc + &(&binomial(m as u32, i as u32) * &u.derivs()[i]) * &psi[m - i];
            }
            psi.push(&acc * &Scalar::ratio(-1, 2));
        }
        psi.truncate(n + 1);
        Jet::new(u.base().clone(), psi)
    };
    Ok((solve(Scalar::one(), Scalar::zero())?, solve(Scalar::zero(), Scalar::one())?))
}

/// `S(ψ1/ψ2)`.
pub fn sl_potential(psi1: &Jet, psi2: &Jet) -> Result<Jet> {
    if psi2.value().is_zero() {
        return Err(Error::Domain("second solution vanishes at the base point".into()));
    }
    schwarzian_jet(&psi1.div(psi2)?)
}

/// The normal forms `d^k/dx^k + ...` in `D_{(1-k)/2,(1+k)/2}` for k = 2, 3, 4,
/// parametrized by potentials of weights 2, 3, 4.
#[derive(Clone, Debug)]
pub struct CanonicalForm {
    pub k: usize,
    /// `u`, then `v`, then `w` (missing ones are zero).
    pub potentials: Vec<Expr>,
}

impl CanonicalForm {
    pub fn new(k: usize, potentials: Vec<Expr>) -> Result<Self> {
        if !(2..=4).contains(&k) || potentials.len() > k - 1 {
            return Err(Error::Shape(format!("canonical form k = {k} with {} potentials", potentials.len())));
        }
        Ok(CanonicalForm { k, potentials })
    }

    fn weights(k: usize) -> (Scalar, Scalar) {
        let kk = k as i64;
        (Scalar::ratio(1 - kk, 2), Scalar::ratio(1 + kk, 2))
    }

    /// Operator coefficients from potential jets `(u, v, w)` (order `n + 2`).
    pub fn op_from_potentials(k: usize, pots: &[Jet], n: usize) -> Result<OpJets> {
        let base = pots[0].base().clone();
        let get = |i: usize| -> Jet { pots.get(i).cloned().unwrap_or_else(|| Jet::zero(base.clone(), n + 2)) };
        let (u, v, w) = (get(0), get(1), get(2));
        let t = |j: Jet| j.truncate(n);
        let d = |j: &Jet, i: usize| -> Result<Jet> { j.derive_n(i)?.truncate(n) };
        let zero = Jet::zero(base.clone(), n);
        let one = Jet::constant(base.clone(), Scalar::one(), n);
        let q = Scalar::ratio;
        let coeffs = match k {
            2 => vec![t(u)?, zero, one.scale(&Scalar::int(2))],
            3 => vec![d(&u, 1)?.scale(&Scalar::int(2)).add(&t(v)?)?, t(u)?.scale(&Scalar::int(4)), zero, one],
            4 => {
                let u0 = t(u.clone())?;
                let a0 = d(&u, 2)?
                    .scale(&q(3, 2))
                    .add(&u0.powi(2)?.scale(&q(9, 4)))?
                    .add(&d(&v, 1)?.scale(&q(1, 2)))?
                    .add(&t(w)?)?;
                let a1 = d(&u, 1)?.scale(&Scalar::int(5)).add(&t(v)?)?;
                vec![a0, a1, u0.scale(&Scalar::int(5)), zero, one]
            }
            _ => return Err(Error::Shape(format!("no canonical form for k = {k}"))),
        };
        let (l, m) = Self::weights(k);
        OpJets::new(l, m, coeffs)
    }

    pub fn jets_at(&self, x0: &Scalar, n: usize) -> Result<OpJets> {
        let pots = self.potentials.iter().map(|p| p.jet_at(x0, n + 2)).collect::<Result<Vec<_>>>()?;
        if pots.is_empty() {
            return Self::op_from_potentials(self.k, &[Jet::zero(x0.clone(), n + 2)], n);
        }
        Self::op_from_potentials(self.k, &pots, n)
    }

    /// Shift of `u` under pullback: `u ↦ u∘g·(g')^2 + c·S(g)`.
    pub fn schwarzian_shift(k: usize) -> Scalar {
        if k == 3 {
            Scalar::ratio(1, 2)
        } else {
            Scalar::one()
        }
    }
}

/// Residuals of the canonical-form transformation rules under pullback by `g`.
#[derive(Clone, Debug)]
pub struct CanonicalReport {
    /// `ρ_g(A_{u,v,w}) - A_{u',v',w'}` with `u' = pull(u) + c S(g)` and `v`,
    /// `w` pulled back as densities.
    pub law_residual: Scalar,
    /// `ρ_g(A_{u,v,w}) - A_{pull(u),pull(v),pull(w)} - c_k C_k(g)` with the
    /// Bol coboundary constants; vanishes when `u = 0`.
    pub cocycle_residual: Scalar,
}

pub fn canonical_form_action(
    form: &CanonicalForm,
    g: &Diffeo,
    samples: &[Scalar],
    n: usize,
) -> Result<CanonicalReport> {
    let k = form.k;
    let (scale, fam) = bol_coboundary_family(k).expect("k in 2..=4");
    let scale = if k == 2 { Scalar::one() } else { scale };
    let mut law = Scalar::zero();
    let mut coc = Scalar::zero();
    let pot_n = n + 2;
    for y0 in samples {
        if !g.admissible_at(y0) {
            continue;
        }
        let gj = g.jet_at(y0, pull_op_demand(k, n) + pot_n + fam.demand())?;
        let x0 = gj.value().clone();
        let a = form.jets_at(&x0, n + k + 2)?;
        let pulled = pull_op_jets(&gj, &a)?.truncate(n)?;
        let mut pots = Vec::new();
        for (i, p) in form.potentials.iter().enumerate() {
            let pj = p.jet_at(&x0, pot_n)?;
            pots.push(crate::modules::pull_density_jet(&gj, &pj, &Scalar::int(i as i64 + 2))?.truncate(pot_n)?);
        }
        if pots.is_empty() {
            pots.push(Jet::zero(y0.clone(), pot_n));
        }
        let plain = CanonicalForm::op_from_potentials(k, &pots, n)?;
        let s = schwarzian_jet(&gj)?.truncate(pot_n)?;
        let mut shifted = pots.clone();
        shifted[0] = shifted[0].add(&s.scale(&CanonicalForm::schwarzian_shift(k)))?;
        let law_op = CanonicalForm::op_from_potentials(k, &shifted, n)?;
        law = Scalar::max_abs([&law, &pulled.max_abs_diff(&law_op)?]);
        let c = fam.evaluate_jet(&gj)?.truncate(n)?.scale(&scale);
        coc = Scalar::max_abs([&coc, &pulled.max_abs_diff(&plain.add(&c)?)?]);
    }
    Ok(CanonicalReport { law_residual: law, cocycle_residual: coc })
}
