use proptest::prelude::*;

use schwarzian::cocycles::{
    bol, bol_coboundary_family, coboundary, cocycle_residual, schwarzian, sl_potential, sl_solve, CocycleFamily,
    CocycleTag,
};
use schwarzian::expr::{parse, Diffeo, Expr, Mobius};
use schwarzian::invariants::{
    lie_cocycle_generic, lie_invariance_generic, solve_invariant_pairing, transvectant, PairingSolution, SymbolMap,
    SymbolTuple,
};
use schwarzian::jets::Jet;
use schwarzian::modules::{
    act_density, apply_op_jets, lie_derivative, probe_recover, pull_density_jet, pull_op_jets, Density, LinDiffOp,
    OpJets, VectorField,
};
use schwarzian::numeric::{gen_binomial, solve_linear, LinearSystem, Solution};
use schwarzian::Scalar;

fn q(n: i64, d: i64) -> Scalar {
    Scalar::ratio(n, d)
}

fn rat() -> impl Strategy<Value = Scalar> {
    (-6i64..=6, 1i64..=4).prop_map(|(n, d)| q(n, d))
}

fn weight() -> impl Strategy<Value = Scalar> {
    (-8i64..=8, 1i64..=3).prop_map(|(n, d)| q(n, d))
}

/// Point in [-1/2, 1/2], where the small cubics below are orientation preserving.
fn near_zero() -> impl Strategy<Value = Scalar> {
    (-4i64..=4).prop_map(|n| q(n, 8))
}

fn small_coeff() -> impl Strategy<Value = Scalar> {
    (-1i64..=1, 1i64..=3).prop_map(|(n, d)| q(n, 2 * d))
}

/// `x + c2 x^2 + c3 x^3` with |c| ≤ 1/2.
fn cubic() -> impl Strategy<Value = Expr> {
    (small_coeff(), small_coeff())
        .prop_map(|(a, b)| Expr::X + Expr::Num(a) * Expr::X.powi(2) + Expr::Num(b) * Expr::X.powi(3))
}

fn polynomial() -> impl Strategy<Value = Expr> {
    prop::collection::vec(rat(), 1..5).prop_map(|cs| {
        cs.into_iter().enumerate().fold(Expr::int(0), |acc, (i, c)| acc + Expr::Num(c) * Expr::X.powi(i as i64))
    })
}

fn mobius() -> impl Strategy<Value = Mobius> {
    (prop::sample::select(vec![-3i64, -2, -1, 1, 2, 3]), rat(), rat()).prop_map(|(a, b, c)| {
        let a = Scalar::int(a);
        let d = (&Scalar::one() + &(&b * &c)).checked_div(&a).unwrap();
        Mobius::new(a, b, c, d).unwrap()
    })
}

fn off_pole(m: &Mobius, x: &Scalar) -> bool {
    m.eval(x).is_ok() && m.jet_at(x, 1).is_ok()
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![Just(Expr::X), (0i64..9, 1i64..5).prop_map(|(n, d)| Expr::rat(n, d))]
}

fn expression() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            (inner.clone(), 0i64..4).prop_map(|(a, k)| a.powi(k)),
            inner.clone().prop_map(|a| -a),
            inner.clone().prop_map(|a| Expr::call(schwarzian::expr::Func::Sin, a)),
            inner.prop_map(|a| Expr::call(schwarzian::expr::Func::Exp, a)),
        ]
    })
}

/// `n`-th derivative at `x0` by repeated symbolic differentiation.
fn symbolic_derivs(e: &Expr, x0: &Scalar, n: usize) -> Vec<Scalar> {
    let mut out = Vec::new();
    let mut d = e.clone();
    for _ in 0..=n {
        out.push(d.eval(x0).unwrap());
        d = d.derive();
    }
    out
}

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn linear_solve_reproduces_rhs(a in prop::collection::vec(rat(), 9), x in prop::collection::vec(rat(), 3)) {
        let rows: Vec<Vec<Scalar>> = a.chunks(3).map(|r| r.to_vec()).collect();
        let b: Vec<Scalar> = rows.iter().map(|r| r.iter().zip(&x).fold(Scalar::zero(), |s, (p, v)| &s + &(p * v))).collect();
        let sys = LinearSystem::new(rows, b.clone()).unwrap();
        let y = match solve_linear(&sys) {
            Solution::Unique(y) => y,
            Solution::Affine { particular, .. } => particular,
            Solution::Inconsistent => panic!("consistent by construction"),
        };
        prop_assert_eq!(sys.apply(&y), b);
    }

    #[test]
    fn binomials_match_integer_formula(n in 0u32..25, i in 0u32..25) {
        let want: u128 = if i > n { 0 } else { (0..i).fold(1u128, |acc, t| acc * (n - t) as u128 / (t + 1) as u128) };
        prop_assert_eq!(gen_binomial(&Scalar::int(n as i64), i), Scalar::int(want as i64));
    }

    #[test]
    fn composition_is_associative(f in cubic(), g in cubic(), h in cubic(), x0 in near_zero()) {
        let hj = h.jet_at(&x0, 6).unwrap();
        let gj = g.jet_at(hj.value(), 6).unwrap();
        let fj = f.jet_at(gj.value(), 6).unwrap();
        let left = Jet::compose(&Jet::compose(&fj, &gj).unwrap(), &hj).unwrap();
        let right = Jet::compose(&fj, &Jet::compose(&gj, &hj).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert!(left.is_exact());
    }

    #[test]
    fn inverse_composes_to_identity(f in cubic(), x0 in near_zero()) {
        let fj = f.jet_at(&x0, 8).unwrap();
        let inv = fj.invert().unwrap();
        prop_assert!(inv.is_exact());
        prop_assert_eq!(Jet::compose(&inv, &fj).unwrap(), Jet::identity(x0, 8));
    }

    #[test]
    fn products_and_compositions_match_symbolic_derivatives(p in polynomial(), r in polynomial(), x0 in rat(), n in 1usize..=8) {
        let a = p.jet_at(&x0, n).unwrap();
        let b = r.jet_at(&x0, n).unwrap();
        let prod = a.mul(&b).unwrap();
        prop_assert_eq!(prod.derivs(), &symbolic_derivs(&(p.clone() * r.clone()), &x0, n)[..]);
        let outer = p.jet_at(b.value(), n).unwrap();
        let comp = Jet::compose(&outer, &b).unwrap();
        prop_assert!(comp.is_exact());
        prop_assert_eq!(comp.derivs(), &symbolic_derivs(&p.substitute(&r), &x0, n)[..]);
    }

    #[test]
    fn jet_at_respects_substitution(f in cubic(), g in cubic(), x0 in near_zero()) {
        let gj = g.jet_at(&x0, 7).unwrap();
        let fj = f.jet_at(gj.value(), 7).unwrap();
        prop_assert_eq!(f.substitute(&g).jet_at(&x0, 7).unwrap(), Jet::compose(&fj, &gj).unwrap());
    }

    #[test]
    fn mobius_jets_are_rational(m in mobius(), x0 in rat(), n in 0usize..=16) {
        prop_assume!(off_pole(&m, &x0));
        prop_assert!(m.jet_at(&x0, n).unwrap().is_exact());
    }

    #[test]
    fn print_then_parse_is_stable(e in expression()) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn density_action_is_a_group_action(f in cubic(), g in cubic(), phi in polynomial(), w in -4i64..=4, y0 in near_zero()) {
        let w = Scalar::int(w);
        // Pull by f∘g equals pull by f then by g.
        let gj = g.jet_at(&y0, 6).unwrap();
        let fj = f.jet_at(gj.value(), 6).unwrap();
        let pj = phi.jet_at(fj.value(), 5).unwrap();
        let both = pull_density_jet(&Jet::compose(&fj, &gj).unwrap(), &pj, &w).unwrap();
        let step = pull_density_jet(&gj, &pull_density_jet(&fj, &pj, &w).unwrap(), &w).unwrap();
        let n = both.order().min(step.order());
        prop_assert_eq!(both.truncate(n).unwrap(), step.truncate(n).unwrap());
    }

    #[test]
    fn operator_action_is_a_group_action(f in cubic(), g in cubic(), a0 in polynomial(), a2 in polynomial(), lam in weight(), k in 0i64..3, y0 in near_zero()) {
        let op = LinDiffOp::new(lam.clone(), &lam + &Scalar::int(k), vec![a0, Expr::int(1), a2]).unwrap();
        let gj = g.jet_at(&y0, 9).unwrap();
        let fj = f.jet_at(gj.value(), 9).unwrap();
        let aj = op.jets_at(fj.value(), 5).unwrap();
        let both = pull_op_jets(&Jet::compose(&fj, &gj).unwrap(), &aj).unwrap();
        let step = pull_op_jets(&gj, &pull_op_jets(&fj, &aj).unwrap()).unwrap();
        let n = both.order().min(step.order());
        prop_assert_eq!(both.truncate(n).unwrap(), step.truncate(n).unwrap());
    }

    #[test]
    fn probes_recover_coefficients(cs in prop::collection::vec(polynomial(), 1..4), x0 in rat()) {
        let k = cs.len() - 1;
        let a = LinDiffOp::new(Scalar::zero(), Scalar::zero(), cs).unwrap().jets_at(&x0, 4 + k).unwrap();
        let got = probe_recover(|p| apply_op_jets(&a, p), k, &x0, 3).unwrap();
        for (g, c) in got.iter().zip(&a.coeffs) {
            prop_assert_eq!(g, &c.truncate(3).unwrap());
        }
    }

    #[test]
    fn projective_cocycles_vanish_on_mobius(m in mobius(), lam in weight(), x0 in rat(), tag in prop::sample::select(CocycleTag::PROJECTIVE.to_vec())) {
        prop_assume!(off_pole(&m, &x0));
        let fam = CocycleFamily::new(tag, lam);
        prop_assert!(fam.evaluate(&Diffeo::Mobius(m), &x0, 4).unwrap().is_zero());
    }

    #[test]
    fn all_families_are_cocycles(f in cubic(), g in cubic(), lam in weight(), y0 in near_zero(), tag in prop::sample::select(CocycleTag::ALL.to_vec())) {
        let fam = CocycleFamily::new(tag, lam);
        let r = cocycle_residual(&fam, &Diffeo::expr(f), &Diffeo::expr(g), &[y0], 3).unwrap();
        prop_assert!(r.is_exact() && r.is_zero(), "{} residual {}", fam, r);
    }

    #[test]
    fn bol_coboundaries(f in cubic(), y0 in near_zero(), k in 2usize..=4) {
        let (scale, fam) = bol_coboundary_family(k).unwrap();
        let f = Diffeo::expr(f);
        let d = coboundary(&bol(k), &f, &y0, 3).unwrap();
        let c = fam.evaluate(&f, &y0, 3).unwrap().scale(&scale);
        prop_assert!(d.padded(k).max_abs_diff(&c.padded(k)).unwrap().is_zero());
    }

    #[test]
    fn non_mobius_maps_are_detected(c2 in small_coeff(), c3 in small_coeff()) {
        prop_assume!(!c2.is_zero() || !c3.is_zero());
        let f = Diffeo::expr(Expr::X + Expr::Num(c2) * Expr::X.powi(2) + Expr::Num(c3) * Expr::X.powi(3));
        let hit = [q(-1, 2), q(0, 1), q(1, 3), q(1, 2)].iter().any(|x| !schwarzian(&f, x, 0).unwrap().value().is_zero());
        prop_assert!(hit);
    }

    #[test]
    fn sturm_liouville_round_trip(u in polynomial(), x0 in rat()) {
        let uj = u.jet_at(&x0, 8).unwrap();
        let (a, b) = sl_solve(&uj).unwrap();
        let back = sl_potential(&b, &a).unwrap();
        prop_assert_eq!(&back, &uj.truncate(back.order()).unwrap());
        prop_assert!(back.order() >= 7);
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn lie_derivative_is_the_flow_derivative(phi in polynomial(), w in weight(), x0 in near_zero(), which in 0usize..3) {
        // One-parameter Möbius flows with velocities 1, x, x^2.
        let flow = |t: &Scalar| -> Mobius {
            let one = Scalar::one();
            match which {
                0 => Mobius::new(one.clone(), t.clone(), Scalar::zero(), one).unwrap(),
                1 => Mobius::new(&one + t, Scalar::zero(), Scalar::zero(), one).unwrap(),
                _ => Mobius::new(one.clone(), Scalar::zero(), -t, one).unwrap(),
            }
        };
        let field = VectorField::new(match which { 0 => Expr::int(1), 1 => Expr::X, _ => Expr::X.powi(2) });
        let d = Density::new(w, phi);
        let h = q(1, 10_000);
        let plus = act_density(&Diffeo::Mobius(flow(&h)), &d, &x0, 0).unwrap();
        let minus = act_density(&Diffeo::Mobius(flow(&-h.clone())), &d, &x0, 0).unwrap();
        let fd = (plus.value() - minus.value()).to_f64() / (2.0 * h.to_f64());
        let lie = lie_derivative(&field, &d).profile.eval(&x0).unwrap().to_f64();
        // The pushforward moves against the field.
        prop_assert!((fd + lie).abs() <= 1e-6 * lie.abs().max(1.0), "fd {} lie {}", fd, lie);
    }

    #[test]
    fn transvectants_are_invariant(m in 0usize..=6, l in weight(), mu in weight()) {
        prop_assert!(lie_invariance_generic(&transvectant(m, &l, &mu)).unwrap().is_zero());
    }

    #[test]
    fn vanishing_pairings_are_unique(m in 3usize..=8, l in weight()) {
        prop_assume!(![q(-1, 2), q(-1, 1), q(-3, 2), q(-2, 1), q(-5, 2), q(-3, 1)].contains(&l));
        prop_assert!(matches!(solve_invariant_pairing(m, &l, true).unwrap(), PairingSolution::Unique(_)));
    }

    #[test]
    fn low_order_pairings_are_cocycles(m in 3usize..=5, l in weight()) {
        let PairingSolution::Unique(p) = solve_invariant_pairing(m, &l, true).unwrap() else {
            return Err(TestCaseError::fail("not unique"));
        };
        prop_assert!(lie_cocycle_generic(&p).unwrap().is_zero());
    }

    #[test]
    fn symbol_map_inverts(k in 1usize..=4, nu in weight(), shift in 0i64..3, x0 in rat(), slots in prop::collection::vec(polynomial(), 5)) {
        let rho = &nu + &Scalar::int(k as i64 + 3 + shift);
        let sm = SymbolMap::new(k, nu.clone(), rho.clone()).unwrap();
        let slots = slots[..=k].iter().map(|p| p.jet_at(&x0, 10).unwrap()).collect();
        let t = SymbolTuple { nu, rho, slots };
        let back = sm.apply(&sm.inverse(&t).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&t.truncate(back.order()).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn symbol_action_is_a_group_action(f in cubic(), g in cubic(), nu in weight(), y0 in near_zero(), slots in prop::collection::vec(polynomial(), 3)) {
        let rho = &nu + &Scalar::int(5);
        let sm = SymbolMap::new(2, nu.clone(), rho.clone()).unwrap();
        let gj = g.jet_at(&y0, 14).unwrap();
        let fj = f.jet_at(gj.value(), 14).unwrap();
        let slots = slots.iter().map(|p| p.jet_at(fj.value(), 10).unwrap()).collect();
        let t = SymbolTuple { nu, rho, slots };
        let both = sm.act(&Jet::compose(&fj, &gj).unwrap(), &t).unwrap();
        let step = sm.act(&gj, &sm.act(&fj, &t).unwrap()).unwrap();
        let n = both.order().min(step.order());
        prop_assert!(both.truncate(n).unwrap().max_abs_diff(&step.truncate(n).unwrap()).unwrap().is_zero());
    }
}

#[test]
fn opjets_reject_mismatched_bases() {
    let a = Jet::identity(q(0, 1), 3);
    let b = Jet::identity(q(1, 1), 3);
    assert!(OpJets::new(q(0, 1), q(1, 1), vec![a, b]).is_err());
}
