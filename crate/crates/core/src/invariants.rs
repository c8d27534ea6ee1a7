//! Invariant bilinear pairings, Lie algebra cocycle checks, the equivariant
//! symbol map and the action it induces, and module extensions twisted by a
//! cocycle.
//!
//! Identities that are trilinear in vector fields and densities are checked
//! "generically": at the base point 0 on monomial jets, which span all jets
//! there. Translation invariance of the identities carries the result to every
//! point.

use std::fmt;

use crate::cocycles::{schwarzian_jet, CocycleFamily, CocycleTag};
use crate::error::{Error, Result};
use crate::expr::{Diffeo, Expr};
use crate::jets::Jet;
use crate::modules::{
    apply_op_jets, commutator_jet, lie_derivative_jet, op_lie_derivative_jets, pull_density_jet, pull_op_jets, OpJets,
    VectorField,
};
use crate::numeric::{factorial, gen_binomial, solve_linear, LinearSystem, Scalar, Solution};

fn mono(a: usize, n: usize) -> Jet {
    Jet::monomial(Scalar::zero(), a, n)
}

fn sl2_jets(n: usize) -> [Jet; 3] {
    [mono(0, n), mono(1, n), mono(2, n)]
}

fn term(name: &str, d: usize) -> String {
    if d <= 4 {
        format!("{name}{}", "'".repeat(d))
    } else {
        format!("{name}^({d})")
    }
}

/// `J(φ, ψ) = Σ_{i+j=m} c_i φ^(i) ψ^(j)` on `F_{λ1} ⊗ F_{λ2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearPairing {
    pub m: usize,
    pub l1: Scalar,
    pub l2: Scalar,
    pub coeffs: Vec<Scalar>,
}

impl BilinearPairing {
    pub fn new(m: usize, l1: Scalar, l2: Scalar, coeffs: Vec<Scalar>) -> Result<Self> {
        if coeffs.len() != m + 1 {
            return Err(Error::Shape(format!("order {m} pairing needs {} coefficients", m + 1)));
        }
        Ok(BilinearPairing { m, l1, l2, coeffs })
    }

    pub fn target_weight(&self) -> Scalar {
        &(&self.l1 + &self.l2) + &Scalar::int(self.m as i64)
    }

    /// Scaled so that the first nonzero coefficient is 1.
    pub fn normalized(&self) -> BilinearPairing {
        BilinearPairing { coeffs: crate::numeric::normalize_leading(&self.coeffs), ..self.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Scalar::is_zero)
    }

    /// The output order is `min(order) - m`.
    pub fn apply_jets(&self, phi: &Jet, psi: &Jet) -> Result<Jet> {
        let have = phi.order().min(psi.order());
        if have < self.m {
            return Err(Error::OrderShortfall { needed: self.m, have });
        }
        let n = have - self.m;
        let mut acc = Jet::zero(phi.base().clone(), n);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let a = phi.derive_n(i)?.truncate(n)?;
            let b = psi.derive_n(self.m - i)?.truncate(n)?;
            acc = acc.add(&a.mul(&b)?.scale(c))?;
        }
        Ok(acc)
    }

    pub fn apply(&self, phi: &Expr, psi: &Expr, x0: &Scalar, n: usize) -> Result<Jet> {
        self.apply_jets(&phi.jet_at(x0, n + self.m)?, &psi.jet_at(x0, n + self.m)?)
    }

    /// Text listing such as `X'''φ' - 1/4·X''''φ`.
    pub fn listing(&self, first: &str, second: &str) -> String {
        let mut out = String::new();
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let neg = c.signum() < 0;
            let mag = c.abs();
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if !mag.is_one() {
                out.push_str(&format!("{mag}·"));
            }
            out.push_str(&term(first, i));
            out.push_str(&term(second, self.m - i));
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }
}

impl fmt::Display for BilinearPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.listing("φ", "ψ"))
    }
}

/// Gordan's transvectant
/// `Σ_{i+j=m} (-1)^i m! C(2λ+m-1, j) C(2μ+m-1, i) φ^(i) ψ^(j)`.
pub fn transvectant(m: usize, lambda: &Scalar, mu: &Scalar) -> BilinearPairing {
    transvectant_with(m, lambda, mu, false)
}

/// The variant with the two binomials placed as `C(2λ+m-1, i) C(2μ+m-1, j)`.
/// Not invariant in general; kept for comparison.
pub fn transvectant_swapped(m: usize, lambda: &Scalar, mu: &Scalar) -> BilinearPairing {
    transvectant_with(m, lambda, mu, true)
}

fn transvectant_with(m: usize, lambda: &Scalar, mu: &Scalar, swapped: bool) -> BilinearPairing {
    let mm = Scalar::int(m as i64 - 1);
    let r1 = &(lambda * &Scalar::int(2)) + &mm;
    let r2 = &(mu * &Scalar::int(2)) + &mm;
    let mf = factorial(m as u32);
    let coeffs = (0..=m)
        .map(|i| {
            let j = m - i;
            let (b1, b2) = if swapped {
                (gen_binomial(&r1, i as u32), gen_binomial(&r2, j as u32))
            } else {
                (gen_binomial(&r1, j as u32), gen_binomial(&r2, i as u32))
            };
            let s = if i % 2 == 0 { mf.clone() } else { -&mf };
            &(&s * &b1) * &b2
        })
        .collect();
    BilinearPairing { m, l1: lambda.clone(), l2: mu.clone(), coeffs }
}

/// `L_Z J(φ,ψ) - J(L_Z φ, ψ) - J(φ, L_Z ψ)`; inputs need order `m + 1`.
pub fn lie_invariance_defect(j: &BilinearPairing, z: &Jet, phi: &Jet, psi: &Jet) -> Result<Jet> {
    let lhs = lie_derivative_jet(z, &j.apply_jets(phi, psi)?, &j.target_weight())?;
    let a = j.apply_jets(&lie_derivative_jet(z, phi, &j.l1)?, psi)?;
    let b = j.apply_jets(phi, &lie_derivative_jet(z, psi, &j.l2)?)?;
    let n = lhs.order().min(a.order()).min(b.order());
    lhs.truncate(n)?.sub(&a.truncate(n)?)?.sub(&b.truncate(n)?)
}

/// Largest invariance defect at the samples, jets of order `n`.
pub fn lie_invariance_residual(
    j: &BilinearPairing,
    z: &VectorField,
    phi: &Expr,
    psi: &Expr,
    samples: &[Scalar],
    n: usize,
) -> Result<Scalar> {
    let ord = n + j.m + 1;
    let mut worst = Scalar::zero();
    for x0 in samples {
        let d = lie_invariance_defect(j, &z.profile.jet_at(x0, ord)?, &phi.jet_at(x0, ord)?, &psi.jet_at(x0, ord)?)?;
        worst = Scalar::max_abs([&worst, &d.max_abs()]);
    }
    Ok(worst)
}

/// Invariance defect over the whole Möbius subalgebra and all jets.
pub fn lie_invariance_generic(j: &BilinearPairing) -> Result<Scalar> {
    let ord = j.m + 1;
    let mut worst = Scalar::zero();
    for z in sl2_jets(ord) {
        for a in 0..=ord {
            for b in 0..=ord {
                let d = lie_invariance_defect(j, &z, &mono(a, ord), &mono(b, ord))?;
                worst = Scalar::max_abs([&worst, d.value()]);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PairingSolution {
    Unique(BilinearPairing),
    None,
    Dimension(usize),
}

impl fmt::Display for PairingSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairingSolution::Unique(p) => f.write_str(&p.listing("X", "φ")),
            PairingSolution::None => f.write_str("none"),
            PairingSolution::Dimension(d) => write!(f, "solution space of dimension {d}"),
        }
    }
}

/// Invariant pairings `Σ c_i X^(i) φ^(m-i)` on `F_{-1} ⊗ F_λ`, optionally
/// also vanishing when `X` is in the Möbius subalgebra (`c_0 = c_1 = c_2 = 0`).
pub fn solve_invariant_pairing(m: usize, lambda: &Scalar, vanish_on_sl2: bool) -> Result<PairingSolution> {
    let ord = m + 1;
    let units: Vec<BilinearPairing> = (0..=m)
        .map(|i| {
            let mut c = vec![Scalar::zero(); m + 1];
            c[i] = Scalar::one();
            BilinearPairing { m, l1: Scalar::int(-1), l2: lambda.clone(), coeffs: c }
        })
        .collect();
    let mut rows = Vec::new();
    for z in sl2_jets(ord) {
        for a in 0..=ord {
            for b in 0..=ord {
                let row = units
                    .iter()
                    .map(|u| Ok(lie_invariance_defect(u, &z, &mono(a, ord), &mono(b, ord))?.value().clone()))
                    .collect::<Result<Vec<_>>>()?;
                if row.iter().any(|x| !x.is_zero()) {
                    rows.push(row);
                }
            }
        }
    }
    if vanish_on_sl2 {
        for i in 0..3.min(m + 1) {
            let mut row = vec![Scalar::zero(); m + 1];
            row[i] = Scalar::one();
            rows.push(row);
        }
    }
    let sol = solve_linear(&LinearSystem::homogeneous(rows, m + 1)?);
    Ok(match sol {
        Solution::Affine { null_basis, .. } if null_basis.len() == 1 => PairingSolution::Unique(BilinearPairing {
            m,
            l1: Scalar::int(-1),
            l2: lambda.clone(),
            coeffs: null_basis.into_iter().next().expect("one vector"),
        }),
        Solution::Affine { null_basis, .. } => PairingSolution::Dimension(null_basis.len()),
        _ => PairingSolution::None,
    })
}

/// `L_X∘c(Y) - c(Y)∘L_X - L_Y∘c(X) + c(X)∘L_Y - c([X,Y])` applied to `φ`,
/// where `c(X)φ = J(X, φ)`; inputs need order `m + 2`.
pub fn lie_cocycle_defect(j: &BilinearPairing, x: &Jet, y: &Jet, phi: &Jet) -> Result<Jet> {
    let lam = &j.l2;
    let mu = j.target_weight();
    let half = |x: &Jet, y: &Jet| -> Result<Jet> {
        let a = lie_derivative_jet(x, &j.apply_jets(y, phi)?, &mu)?;
        let b = j.apply_jets(y, &lie_derivative_jet(x, phi, lam)?)?;
        let n = a.order().min(b.order());
        a.truncate(n)?.sub(&b.truncate(n)?)
    };
    let t1 = half(x, y)?;
    let t2 = half(y, x)?;
    let t3 = j.apply_jets(&commutator_jet(x, y)?, phi)?;
    let n = t1.order().min(t2.order()).min(t3.order());
    t1.truncate(n)?.sub(&t2.truncate(n)?)?.sub(&t3.truncate(n)?)
}

/// Largest cocycle defect for the given fields at the samples, over the
/// probe densities `(x - x0)^c`, `c ≤ m + 1`.
pub fn lie_cocycle_residual(
    j: &BilinearPairing,
    x: &VectorField,
    y: &VectorField,
    samples: &[Scalar],
) -> Result<Scalar> {
    let ord = j.m + 2;
    let mut worst = Scalar::zero();
    for x0 in samples {
        let (xj, yj) = (x.profile.jet_at(x0, ord)?, y.profile.jet_at(x0, ord)?);
        for c in 0..ord {
            let d = lie_cocycle_defect(j, &xj, &yj, &Jet::monomial(x0.clone(), c, ord))?;
            worst = Scalar::max_abs([&worst, d.value()]);
        }
    }
    Ok(worst)
}

/// Cocycle defect over all vector fields and densities.
pub fn lie_cocycle_generic(j: &BilinearPairing) -> Result<Scalar> {
    let ord = j.m + 2;
    let mut worst = Scalar::zero();
    for a in 0..ord {
        for b in a + 1..ord {
            for c in 0..ord {
                let d = lie_cocycle_defect(j, &mono(a, ord), &mono(b, ord), &mono(c, ord))?;
                worst = Scalar::max_abs([&worst, d.value()]);
            }
        }
    }
    Ok(worst)
}

/// Whether the pairing that is invariant and vanishes on the Möbius
/// subalgebra is a Lie algebra cocycle; `None` when that pairing is not unique.
pub fn pairing_is_cocycle(m: usize, lambda: &Scalar) -> Result<Option<bool>> {
    match solve_invariant_pairing(m, lambda, true)? {
        PairingSolution::Unique(p) => Ok(Some(lie_cocycle_generic(&p)?.is_zero())),
        _ => Ok(None),
    }
}

/// `2δ ∈ {2, 3, ..., 2k}` makes the symbol map degenerate.
pub fn is_resonant(k: usize, delta: &Scalar) -> bool {
    let two = delta * &Scalar::int(2);
    match two.as_i64() {
        Some(t) if two.is_exact() => (2..=2 * k as i64).contains(&t),
        Some(_) | None => {
            let t = two.to_f64();
            (2..=2 * k).any(|v| (t - v as f64).abs() < 1e-12)
        }
    }
}

fn check_resonance(k: usize, nu: &Scalar, rho: &Scalar) -> Result<Scalar> {
    let delta = rho - nu;
    if is_resonant(k, &delta) {
        return Err(Error::Resonance(format!("weight difference {delta} with k = {k}")));
    }
    Ok(delta)
}

type Matrix = Vec<Vec<Scalar>>;

fn alpha_from(k: usize, entry: impl Fn(usize, usize) -> Result<Scalar>) -> Result<Matrix> {
    let mut a = vec![vec![Scalar::zero(); k + 1]; k + 1];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = Scalar::one();
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            *slot = entry(i, j)?;
        }
    }
    Ok(a)
}

/// `α_i^j = C(j,i) C(2ν+j, j-i) / C(2(ρ-ν)-2i-1, j-i)`, the printed binomial
/// formula read with its binomials in their upper-index form.
pub fn symbol_alpha(k: usize, nu: &Scalar, rho: &Scalar) -> Result<Matrix> {
    let delta = check_resonance(k, nu, rho)?;
    alpha_from(k, |i, j| {
        let d = (j - i) as u32;
        let num = &crate::numeric::binomial(j as u32, i as u32)
            * &gen_binomial(&(&(nu * &Scalar::int(2)) + &Scalar::int(j as i64)), d);
        let den = gen_binomial(&(&(&delta * &Scalar::int(2)) - &Scalar::int(2 * i as i64 + 1)), d);
        num.checked_div(&den).map_err(|_| Error::Resonance(format!("α_{i}^{j} has a zero denominator")))
    })
}

/// `α_i^j = C(j,i) C(2ν+j-1, j-i) / C(2(ρ-ν)-2i-2, j-i)`.
pub fn symbol_alpha_closed(k: usize, nu: &Scalar, rho: &Scalar) -> Result<Matrix> {
    let delta = check_resonance(k, nu, rho)?;
    alpha_from(k, |i, j| {
        let d = (j - i) as u32;
        let num = &crate::numeric::binomial(j as u32, i as u32)
            * &gen_binomial(&(&(nu * &Scalar::int(2)) + &Scalar::int(j as i64 - 1)), d);
        let den = gen_binomial(&(&(&delta * &Scalar::int(2)) - &Scalar::int(2 * i as i64 + 2)), d);
        num.checked_div(&den).map_err(|_| Error::Resonance(format!("α_{i}^{j} has a zero denominator")))
    })
}

/// The coefficients determined by equivariance under the Möbius subalgebra,
/// solved row by row over exact rationals, unit diagonal.
pub fn symbol_alpha_solved(k: usize, nu: &Scalar, rho: &Scalar) -> Result<Matrix> {
    let delta = check_resonance(k, nu, rho)?;
    let ord = 2 * k + 4;
    let zs = sl2_jets(ord);
    let mut alpha = vec![vec![Scalar::zero(); k + 1]; k + 1];
    for i in 0..=k {
        alpha[i][i] = Scalar::one();
        if i == k {
            continue;
        }
        let w = &delta - &Scalar::int(i as i64);
        let (mut rows, mut rhs) = (Vec::new(), Vec::new());
        for z in &zs {
            for j0 in i..=k {
                for p in 0..=k + 1 {
                    let mut coeffs = vec![Jet::zero(Scalar::zero(), ord); k + 1];
                    coeffs[j0] = mono(p, ord);
                    let a = OpJets::new(nu.clone(), rho.clone(), coeffs)?;
                    let la = op_lie_derivative_jets(z, &a)?;
                    let at0 = |jet: &Jet| -> Scalar { jet.value().clone() };
                    let c0 = &at0(&la.coeffs[i]) - &at0(&lie_derivative_jet(z, &a.coeffs[i], &w)?);
                    let mut row = Vec::with_capacity(k - i);
                    for j in i + 1..=k {
                        let d = j - i;
                        let x = at0(&la.coeffs[j].derive_n(d)?);
                        let y = at0(&lie_derivative_jet(z, &a.coeffs[j].derive_n(d)?, &w)?);
                        row.push(&x - &y);
                    }
                    if row.iter().any(|v| !v.is_zero()) || !c0.is_zero() {
                        rows.push(row);
                        rhs.push(-c0);
                    }
                }
            }
        }
        match solve_linear(&LinearSystem::new(rows, rhs)?) {
            Solution::Unique(v) => {
                for (off, x) in v.into_iter().enumerate() {
                    alpha[i][i + 1 + off] = x;
                }
            }
            _ => return Err(Error::Resonance(format!("row {i} is not determined"))),
        }
    }
    Ok(alpha)
}

/// For each row, the factor `c` with `printed = c · solved` when the rows are
/// proportional.
pub fn row_proportionality(printed: &Matrix, solved: &Matrix) -> Vec<Option<Scalar>> {
    printed
        .iter()
        .zip(solved)
        .map(|(p, s)| {
            let lead = s.iter().position(|x| !x.is_zero())?;
            let c = p[lead].checked_div(&s[lead]).ok()?;
            p.iter().zip(s).all(|(a, b)| a == &(&c * b)).then_some(c)
        })
        .collect()
}

/// Density components `ā_0 .. ā_k` (slot `i` has weight `ρ - ν - i`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolTuple {
    pub nu: Scalar,
    pub rho: Scalar,
    pub slots: Vec<Jet>,
}

impl SymbolTuple {
    pub fn weight(&self, i: usize) -> Scalar {
        &(&self.rho - &self.nu) - &Scalar::int(i as i64)
    }

    pub fn order(&self) -> usize {
        self.slots.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn truncate(&self, n: usize) -> Result<SymbolTuple> {
        let slots = self.slots.iter().map(|s| s.truncate(n)).collect::<Result<_>>()?;
        Ok(SymbolTuple { slots, ..self.clone() })
    }

    pub fn max_abs_diff(&self, other: &SymbolTuple) -> Result<Scalar> {
        let mut worst = Scalar::zero();
        for (a, b) in self.slots.iter().zip(&other.slots) {
            worst = Scalar::max_abs([&worst, &a.max_abs_diff(b)?]);
        }
        Ok(worst)
    }
}

/// `ā_i = Σ_{j ≥ i} α_i^j a_j^(j-i)` on `D^k_{ν,ρ}`.
#[derive(Clone, Debug)]
pub struct SymbolMap {
    pub k: usize,
    pub nu: Scalar,
    pub rho: Scalar,
    pub alpha: Matrix,
}

impl SymbolMap {
    /// Solved coefficients for exact weights; the closed form otherwise.
    pub fn new(k: usize, nu: Scalar, rho: Scalar) -> Result<Self> {
        let alpha = if nu.is_exact() && rho.is_exact() {
            symbol_alpha_solved(k, &nu, &rho)?
        } else {
            symbol_alpha_closed(k, &nu, &rho)?
        };
        Ok(SymbolMap { k, nu, rho, alpha })
    }

    pub fn delta(&self) -> Scalar {
        &self.rho - &self.nu
    }

    /// Output order drops by `k`.
    pub fn apply(&self, a: &OpJets) -> Result<SymbolTuple> {
        let k = self.k;
        let a = a.padded(k);
        if a.k() != k {
            return Err(Error::Shape(format!("operator of order {} for a symbol map of order {k}", a.k())));
        }
        let n = a.order().checked_sub(k).ok_or(Error::OrderShortfall { needed: k, have: a.order() })?;
        let mut slots = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let mut s = Jet::zero(a.base().clone(), n);
            for j in i..=k {
                let c = &self.alpha[i][j];
                if !c.is_zero() {
                    s = s.add(&a.coeffs[j].derive_n(j - i)?.truncate(n)?.scale(c))?;
                }
            }
            slots.push(s);
        }
        Ok(SymbolTuple { nu: self.nu.clone(), rho: self.rho.clone(), slots })
    }

    /// Back substitution from the top slot; output order drops by `k`.
    pub fn inverse(&self, t: &SymbolTuple) -> Result<OpJets> {
        let k = self.k;
        if t.slots.len() != k + 1 {
            return Err(Error::Shape(format!("{} slots for a symbol map of order {k}", t.slots.len())));
        }
        let n = t.order().checked_sub(k).ok_or(Error::OrderShortfall { needed: k, have: t.order() })?;
        let mut a: Vec<Option<Jet>> = vec![None; k + 1];
        for i in (0..=k).rev() {
            // a_i keeps order t.order() - (k - i)
            let ni = t.order() - (k - i);
            let mut s = t.slots[i].truncate(ni)?;
            for (j, aj) in a.iter().enumerate().skip(i + 1) {
                let c = &self.alpha[i][j];
                if !c.is_zero() {
                    let aj = aj.as_ref().expect("filled");
                    s = s.sub(&aj.derive_n(j - i)?.truncate(ni)?.scale(c))?;
                }
            }
            a[i] = Some(s);
        }
        let coeffs = a.into_iter().map(|j| j.expect("filled").truncate(n)).collect::<Result<_>>()?;
        OpJets::new(self.nu.clone(), self.rho.clone(), coeffs)
    }

    /// `σ ∘ ρ_g ∘ σ^(-1)` with `ρ_g` the operator pullback; `t` is based at
    /// `g(y0)` and the result at `y0`.
    pub fn act(&self, g: &Jet, t: &SymbolTuple) -> Result<SymbolTuple> {
        let a = self.inverse(t)?;
        self.apply(&pull_op_jets(g, &a)?)
    }

    /// Pulls every slot back as a density of its own weight.
    pub fn act_diagonal(&self, g: &Jet, t: &SymbolTuple) -> Result<SymbolTuple> {
        let slots =
            t.slots.iter().enumerate().map(|(i, s)| pull_density_jet(g, s, &t.weight(i))).collect::<Result<_>>()?;
        Ok(SymbolTuple { slots, ..t.clone() })
    }
}

/// `2λ(μ-1) / (2(μ-λ) - 3)`.
pub fn beta_formula(lambda: &Scalar, mu: &Scalar) -> Result<Scalar> {
    let num = &(lambda * &Scalar::int(2)) * &(mu - &Scalar::one());
    let den = &(&(mu - lambda) * &Scalar::int(2)) - &Scalar::int(3);
    num.checked_div(&den)
}

/// Entrywise difference of two jets: absolute on exact data, relative to
/// `max(1, |a|, |b|)` on floats (high derivatives grow factorially).
pub fn jet_residual(a: &Jet, b: &Jet) -> Result<Scalar> {
    let n = a.order().min(b.order());
    let (a, b) = (a.truncate(n)?, b.truncate(n)?);
    if a.is_exact() && b.is_exact() {
        return a.max_abs_diff(&b);
    }
    let worst = a
        .derivs()
        .iter()
        .zip(b.derivs())
        .map(|(x, y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            (x - y).abs() / 1f64.max(x.abs()).max(y.abs())
        })
        .fold(0.0, f64::max);
    Ok(Scalar::float(worst))
}

/// A single constant fitted as `target = c · basis` over several jets.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFit {
    pub value: Option<Scalar>,
    pub residual: Scalar,
}

impl ScalarFit {
    pub fn is_exact_fit(&self) -> bool {
        self.value.as_ref().is_some_and(Scalar::is_exact) && self.residual.is_exact() && self.residual.is_zero()
    }
}

/// The constant is read off the largest basis entry, then checked on every
/// entry.
pub fn fit_ratio(targets: &[Jet], basis: &[Jet]) -> Result<ScalarFit> {
    let mut best: Option<(f64, Scalar, Scalar)> = None;
    for (t, b) in targets.iter().zip(basis) {
        for (x, y) in t.derivs().iter().zip(b.derivs()) {
            let m = y.to_f64().abs();
            if m > 0.0 && best.as_ref().is_none_or(|(bm, _, _)| m > *bm) {
                best = Some((m, x.clone(), y.clone()));
            }
        }
    }
    let value = match best {
        Some((_, x, y)) => Some(x.checked_div(&y)?),
        None => None,
    };
    let c = value.clone().unwrap_or_else(Scalar::zero);
    let mut residual = Scalar::zero();
    for (t, b) in targets.iter().zip(basis) {
        residual = Scalar::max_abs([&residual, &jet_residual(t, &b.scale(&c))?]);
    }
    Ok(ScalarFit { value, residual })
}

/// Exact fit `target = Σ c_b basis_b` sharing the constants across all jets.
pub fn fit_span(targets: &[Jet], bases: &[Vec<Jet>]) -> Result<Solution> {
    let cols = bases.first().map_or(0, Vec::len);
    let (mut rows, mut rhs) = (Vec::new(), Vec::new());
    for (t, bs) in targets.iter().zip(bases) {
        let n = bs.iter().map(Jet::order).min().unwrap_or(0).min(t.order());
        for e in 0..=n {
            rows.push(bs.iter().map(|b| b.derivs()[e].clone()).collect::<Vec<_>>());
            rhs.push(t.derivs()[e].clone());
        }
    }
    if rows.is_empty() {
        return Ok(Solution::Inconsistent);
    }
    debug_assert!(rows.iter().all(|r| r.len() == cols));
    Ok(solve_linear(&LinearSystem::new(rows, rhs)?))
}

/// Transformed tuple minus its diagonal part, for the tuple with `φ` in slot
/// `j` and zero elsewhere. Also returns the pulled-back `φ`.
pub fn single_slot_contributions(sm: &SymbolMap, g: &Jet, j: usize, phi: &Jet) -> Result<(Vec<Jet>, Jet)> {
    let k = sm.k;
    let mut slots = vec![Jet::zero(phi.base().clone(), phi.order()); k + 1];
    slots[j] = phi.clone();
    let t = SymbolTuple { nu: sm.nu.clone(), rho: sm.rho.clone(), slots };
    let new = sm.act(g, &t)?;
    let n = new.order();
    let pulled = pull_density_jet(g, phi, &t.weight(j))?;
    let mut out = new.slots.clone();
    out[j] = out[j].sub(&pulled.truncate(n)?)?;
    Ok((out, pulled))
}

/// Fractional density weights need `g' > 0`.
fn orientation_preserving(g: &Diffeo, y0: &Scalar) -> bool {
    g.admissible_at(y0) && g.jet_at(y0, 1).is_ok_and(|j| j.derivs()[1].signum() > 0)
}

fn map_jets(maps: &[Diffeo], samples: &[Scalar], order: usize) -> Result<Vec<Jet>> {
    let mut out = Vec::new();
    for g in maps {
        for y0 in samples {
            if orientation_preserving(g, y0) {
                out.push(g.jet_at(y0, order)?);
            }
        }
    }
    Ok(out)
}

/// Fitted pullback-form constant `β'` in
/// `ā_0 ↦ ā_0∘g·(g')^δ + β' S(g) · (ā_2∘g·(g')^(δ-2))` on `D^2_{λ,μ}`.
pub fn fit_beta(
    lambda: &Scalar,
    mu: &Scalar,
    maps: &[Diffeo],
    phi: &Expr,
    samples: &[Scalar],
    n: usize,
) -> Result<ScalarFit> {
    let sm = SymbolMap::new(2, lambda.clone(), mu.clone())?;
    let (mut targets, mut basis) = (Vec::new(), Vec::new());
    for gj in map_jets(maps, samples, n + 8)? {
        let pj = phi.jet_at(gj.value(), n + 5)?;
        let (d, pulled) = single_slot_contributions(&sm, &gj, 2, &pj)?;
        let s = schwarzian_jet(&gj)?;
        let m = d[0].order().min(s.order());
        targets.push(d[0].truncate(m)?);
        basis.push(s.truncate(m)?.mul(&pulled.truncate(m)?)?);
    }
    fit_ratio(&targets, &basis)
}

/// Kind of contribution a slot receives from a higher slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Contribution {
    Zero,
    Schwarzian,
    T,
    U,
}

impl fmt::Display for Contribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Contribution::Zero => "0",
            Contribution::Schwarzian => "S",
            Contribution::T => "T",
            Contribution::U => "U",
        })
    }
}

#[derive(Clone, Debug)]
pub struct PatternEntry {
    pub source: usize,
    pub target: usize,
    pub expected: Contribution,
    /// Fitted constants (the `S^2` coefficient second for `U`).
    pub coefficients: Vec<Scalar>,
    pub holds: bool,
    /// For `U`: whether the `S^2 φ` component vanishes.
    pub pure: bool,
}

/// How the top five slots of `D^k_{ν,ρ}` in symbol coordinates mix under
/// non-Möbius maps: a slot `d` below the source receives nothing for
/// `d ≤ 1`, a multiple of `S(g)` for `d = 2`, of `T_{ρ-ν-j}(g)` for `d = 3`,
/// and a combination of `U_{ρ-ν-j}(g)` and `S(g)^2` for `d = 4`.
pub fn symbol_action_pattern(
    k: usize,
    nu: &Scalar,
    rho: &Scalar,
    maps: &[Diffeo],
    phi: &Expr,
    samples: &[Scalar],
    n: usize,
) -> Result<Vec<PatternEntry>> {
    if k < 4 {
        return Err(Error::Shape("the five-slot pattern needs k ≥ 4".into()));
    }
    let sm = SymbolMap::new(k, nu.clone(), rho.clone())?;
    let delta = sm.delta();
    let gjs = map_jets(maps, samples, n + 3 * k + 8)?;
    let mut out = Vec::new();
    for j in k - 4..=k {
        let mut per_map = Vec::new();
        for gj in &gjs {
            let pj = phi.jet_at(gj.value(), n + 2 * k + 4)?;
            per_map.push((gj, single_slot_contributions(&sm, gj, j, &pj)?));
        }
        let w = &delta - &Scalar::int(j as i64);
        for i in (k - 4..=j).rev() {
            let d = j - i;
            let expected = match d {
                0 | 1 => Contribution::Zero,
                2 => Contribution::Schwarzian,
                3 => Contribution::T,
                _ => Contribution::U,
            };
            let (mut targets, mut bases) = (Vec::new(), Vec::new());
            for (gj, (diffs, pulled)) in &per_map {
                let t = &diffs[i];
                let m = t.order();
                let pm = pulled.truncate(pulled.order().min(m + 4))?;
                let s = schwarzian_jet(gj)?;
                let basis = match expected {
                    Contribution::Zero => vec![],
                    Contribution::Schwarzian => vec![s.truncate(m)?.mul(&pm.truncate(m)?)?],
                    Contribution::T => {
                        let op = CocycleFamily::new(CocycleTag::T, w.clone()).evaluate_jet(gj)?;
                        vec![apply_op_jets(&op, &pm)?.truncate(m)?]
                    }
                    Contribution::U => {
                        let op = CocycleFamily::new(CocycleTag::U, w.clone()).evaluate_jet(gj)?;
                        let s2 = s.truncate(m)?.powi(2)?.mul(&pm.truncate(m)?)?;
                        vec![apply_op_jets(&op, &pm)?.truncate(m)?, s2]
                    }
                };
                targets.push(t.clone());
                bases.push(basis);
            }
            let (coefficients, holds, pure) = if expected == Contribution::Zero {
                (vec![], targets.iter().all(Jet::is_zero), true)
            } else {
                match fit_span(&targets, &bases)? {
                    Solution::Unique(c) => {
                        let pure = expected != Contribution::U || c[1].is_zero();
                        (c, true, pure)
                    }
                    _ => (vec![], false, false),
                }
            };
            out.push(PatternEntry { source: j, target: i, expected, coefficients, holds, pure });
        }
    }
    Ok(out)
}

/// `F_λ ⊕ F_μ` with `ρ_g(φ, ψ) = (g*φ, g*ψ + γ C(g)(g*φ))`, `g*` the pullback.
#[derive(Clone, Debug)]
pub struct ExtensionModule {
    pub family: CocycleFamily,
    pub gamma: Scalar,
}

impl ExtensionModule {
    pub fn new(family: CocycleFamily, gamma: Scalar) -> Self {
        ExtensionModule { family, gamma }
    }

    pub fn weights(&self) -> (Scalar, Scalar) {
        self.family.weights()
    }

    /// `φ`, `ψ` based at `g(y0)`; the result is based at `y0`.
    pub fn act_jets(&self, g: &Jet, phi: &Jet, psi: &Jet) -> Result<(Jet, Jet)> {
        let (l, m) = self.weights();
        let p = pull_density_jet(g, phi, &l)?;
        let q = pull_density_jet(g, psi, &m)?;
        if self.gamma.is_zero() {
            let n = p.order().min(q.order());
            return Ok((p.truncate(n)?, q.truncate(n)?));
        }
        let c = self.family.evaluate_jet(g)?;
        let cp = apply_op_jets(&c, &p)?;
        let n = cp.order().min(q.order());
        Ok((p.truncate(n)?, q.truncate(n)?.add(&cp.truncate(n)?.scale(&self.gamma))?))
    }

    /// The action of `f` at `y0` on the pair of profiles.
    pub fn act(&self, f: &Diffeo, phi: &Expr, psi: &Expr, y0: &Scalar, n: usize) -> Result<(Jet, Jet)> {
        let d = self.family.demand() + self.family.op_order();
        let fj = f.jet_at(y0, n + d + 1)?;
        let x0 = fj.value().clone();
        let (a, b) = self.act_jets(&fj, &phi.jet_at(&x0, n + d)?, &psi.jet_at(&x0, n + d)?)?;
        Ok((a.truncate(n)?, b.truncate(n)?))
    }
}

/// `ρ_g∘ρ_f - ρ_{f∘g}` (the composite `f∘g` acts as `g*∘f*`), largest entry
/// over the admissible samples.
pub fn extension_homomorphism_residual(
    e: &ExtensionModule,
    f: &Diffeo,
    g: &Diffeo,
    phi: &Expr,
    psi: &Expr,
    samples: &[Scalar],
    n: usize,
) -> Result<Scalar> {
    let d = e.family.demand() + e.family.op_order() + 2;
    let mut worst = Scalar::zero();
    for y0 in samples {
        if !orientation_preserving(g, y0) || !g.eval(y0).is_ok_and(|x| orientation_preserving(f, &x)) {
            continue;
        }
        let gj = g.jet_at(y0, n + 2 * d)?;
        let fj = f.jet_at(gj.value(), n + 2 * d)?;
        let x0 = fj.value().clone();
        let (pj, qj) = (phi.jet_at(&x0, n + 2 * d)?, psi.jet_at(&x0, n + 2 * d)?);
        let (a1, b1) = e.act_jets(&fj, &pj, &qj)?;
        let (a2, b2) = e.act_jets(&gj, &a1, &b1)?;
        let (a3, b3) = e.act_jets(&Jet::compose(&fj, &gj)?, &pj, &qj)?;
        let m = n.min(a2.order()).min(b2.order());
        let r = Scalar::max_abs([
            &a2.truncate(m)?.max_abs_diff(&a3.truncate(m)?)?,
            &b2.truncate(m)?.max_abs_diff(&b3.truncate(m)?)?,
        ]);
        worst = Scalar::max_abs([&worst, &r]);
    }
    Ok(worst)
}

/// The two operator submodules realizing extensions by `S_λ` and `T_λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubmoduleExample {
    /// `a_2 ∂² - ((2ν+1)/λ) a_2' ∂ + a_0` in `D^2_{ν,ν+λ+2}`.
    SecondOrder,
    /// `a_3 ∂³ - 3((ν+1)/λ) a_3' ∂² + 3((ν+1)(2ν+1)/(λ(2λ+1))) a_3'' ∂ + a_0`
    /// in `D^3_{ν,ν+λ+3}`, with `3ν² + 3ν(λ+2) + λ + 2 = 0`.
    ThirdOrder,
}

impl SubmoduleExample {
    pub fn k(self) -> usize {
        match self {
            SubmoduleExample::SecondOrder => 2,
            SubmoduleExample::ThirdOrder => 3,
        }
    }

    pub fn excluded(self) -> Vec<Scalar> {
        let q = Scalar::ratio;
        match self {
            SubmoduleExample::SecondOrder => vec![q(0, 1), q(-1, 2), q(-1, 1)],
            SubmoduleExample::ThirdOrder => vec![q(0, 1), q(-1, 2), q(-1, 1), q(-3, 2), q(-2, 1)],
        }
    }

    fn family(self, lambda: &Scalar) -> CocycleFamily {
        match self {
            SubmoduleExample::SecondOrder => CocycleFamily::new(CocycleTag::S, lambda.clone()),
            SubmoduleExample::ThirdOrder => CocycleFamily::new(CocycleTag::T, lambda.clone()),
        }
    }
}

/// Roots of `3ν² + 3ν(λ+2) + λ + 2 = 0`, larger first; rational when the
/// discriminant is a rational square.
pub fn cubic_submodule_nu(lambda: &Scalar) -> Result<(Scalar, Scalar)> {
    let t = lambda + &Scalar::int(2);
    let disc = &(&(&t * &t) * &Scalar::int(9)) - &(&t * &Scalar::int(12));
    if disc.signum() < 0 {
        return Err(Error::NoRealRoot(format!("discriminant {disc} at λ = {lambda}")));
    }
    let r = disc.pow_or_float(&Scalar::ratio(1, 2))?;
    let base = -&(&t * &Scalar::int(3));
    let six = Scalar::int(6);
    Ok(((&base + &r).checked_div(&six)?, (&base - &r).checked_div(&six)?))
}

#[derive(Clone, Debug)]
pub struct SubmoduleReport {
    pub nu: Scalar,
    /// Largest violation of the coefficient locks after the action.
    pub closure_residual: Scalar,
    /// `γ` in the pullback-form extension action on `(a_k, ā_0)`.
    pub gamma: ScalarFit,
    /// Closed form of `γ` where one is known.
    pub gamma_expected: Option<Scalar>,
    /// Top coefficient transforms as a pure density.
    pub top_residual: Scalar,
}

/// Closure and induced action of a submodule example under the maps.
#[allow(clippy::too_many_arguments)]
pub fn submodule_check(
    ex: SubmoduleExample,
    lambda: &Scalar,
    nu: Option<Scalar>,
    maps: &[Diffeo],
    phi: &Expr,
    psi: &Expr,
    samples: &[Scalar],
    n: usize,
) -> Result<SubmoduleReport> {
    if ex.excluded().contains(lambda) {
        return Err(Error::ExcludedWeight(format!("λ = {lambda}")));
    }
    let k = ex.k();
    let nu = match (ex, nu) {
        (_, Some(v)) => v,
        (SubmoduleExample::SecondOrder, None) => Scalar::ratio(1, 3),
        (SubmoduleExample::ThirdOrder, None) => cubic_submodule_nu(lambda)?.0,
    };
    let one = Scalar::one();
    let two = Scalar::int(2);
    let three = Scalar::int(3);
    let rho = &(&nu + lambda) + &Scalar::int(k as i64);
    // lock constants: a_{k-1} = c1 a_k', a_{k-2} = c2 a_k''
    let c1 = match ex {
        SubmoduleExample::SecondOrder => -(&(&(&nu * &two) + &one).checked_div(lambda)?),
        SubmoduleExample::ThirdOrder => -(&(&three * &(&nu + &one)).checked_div(lambda)?),
    };
    let c2 = match ex {
        SubmoduleExample::SecondOrder => Scalar::zero(),
        SubmoduleExample::ThirdOrder => {
            let num = &(&three * &(&nu + &one)) * &(&(&nu * &two) + &one);
            let den = lambda * &(&(lambda * &two) + &one);
            num.checked_div(&den)?
        }
    };
    let sm = SymbolMap::new(k, nu.clone(), rho.clone())?;
    let fam = ex.family(lambda);
    let ord = n + 2 * k + 4;
    let (mut closure, mut top) = (Scalar::zero(), Scalar::zero());
    let (mut targets, mut basis) = (Vec::new(), Vec::new());
    for gj in map_jets(maps, samples, ord)? {
        let x0 = gj.value().clone();
        let pj = phi.jet_at(&x0, ord)?;
        let m = ord - 2;
        let mut coeffs = vec![psi.jet_at(&x0, m)?];
        if k == 3 {
            coeffs.push(pj.derive_n(2)?.scale(&c2));
        }
        coeffs.push(pj.derive()?.truncate(m)?.scale(&c1));
        coeffs.push(pj.truncate(m)?);
        let a = OpJets::new(nu.clone(), rho.clone(), coeffs)?;
        let b = pull_op_jets(&gj, &a)?;
        let nb = n.min(b.order() - 2);
        let lock1 = jet_residual(&b.coeffs[k - 1].truncate(nb)?, &b.coeffs[k].derive()?.truncate(nb)?.scale(&c1))?;
        closure = Scalar::max_abs([&closure, &lock1]);
        if k == 3 {
            let lock2 = jet_residual(&b.coeffs[1].truncate(nb)?, &b.coeffs[3].derive_n(2)?.truncate(nb)?.scale(&c2))?;
            closure = Scalar::max_abs([&closure, &lock2]);
        }
        let pulled_top = pull_density_jet(&gj, &pj, lambda)?;
        top = Scalar::max_abs([&top, &jet_residual(&b.coeffs[k].truncate(nb)?, &pulled_top)?]);
        let before = sm.apply(&a)?;
        let after = sm.apply(&b)?;
        let pulled0 = pull_density_jet(&gj, &before.slots[0], &sm.delta())?;
        let cg = fam.evaluate_jet(&gj)?;
        let cp = apply_op_jets(&cg, &pulled_top)?;
        let nn = n.min(after.order()).min(pulled0.order()).min(cp.order());
        targets.push(after.slots[0].truncate(nn)?.sub(&pulled0.truncate(nn)?)?);
        basis.push(cp.truncate(nn)?);
    }
    let gamma = fit_ratio(&targets, &basis)?;
    let gamma_expected = match ex {
        SubmoduleExample::SecondOrder => Some(-beta_formula(&nu, &rho)?),
        SubmoduleExample::ThirdOrder => None,
    };
    Ok(SubmoduleReport { nu, closure_residual: closure, gamma, gamma_expected, top_residual: top })
}
