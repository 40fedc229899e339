mod common;

use std::collections::BTreeMap;

use common::*;
use num::Zero;
use proptest::prelude::*;
use transdiff::localize::{extend, glue, hom_vanishing, HomVerdict, LocalOperator, LocalizeError, LocalizedPoly};
use transdiff::ring::{Poly, Variable};
use transdiff::stream::{FamilyTermSpec, OpExpr};
use transdiff::weyl::WeylOp;
use transdiff::Rational;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn x() -> Poly {
    Poly::x(1)
}

/// Laurent polynomial in `x1`: exponent → coefficient.
type Laurent = BTreeMap<i64, Rational>;

fn laurent_of(v: &LocalizedPoly) -> Laurent {
    let mut out = Laurent::new();
    for (m, c) in v.num.terms() {
        let e = i64::from(m.exponent(Variable::x(1))) - i64::from(v.k);
        *out.entry(e).or_insert_with(Rational::zero) += c;
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// `Σ c x^a ∂^b` acting on Laurent monomials by `∂^b x^m = m(m−1)⋯(m−b+1) x^{m−b}`.
fn laurent_apply(op: &WeylOp, f: &Laurent) -> Laurent {
    let mut out = Laurent::new();
    for (a, b, c) in op.terms() {
        let (a, b) = (i64::from(a.exponent(Variable::x(1))), i64::from(b.exponent(Variable::x(1))));
        for (m, fc) in f {
            let ff: i64 = (0..b).map(|j| m - j).product();
            *out.entry(m - b + a).or_insert_with(Rational::zero) += c * fc * q(ff);
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn random_local_input(r: &mut impl rand::Rng, vars: &[Variable]) -> LocalizedPoly {
    LocalizedPoly { num: random_poly(r, vars, 4, 3), k: r.gen_range(0..=3) }
}

fn local_op(d: &WeylOp, f: &Poly) -> LocalOperator {
    extend(&OpExpr::finite(d.clone()), f, 16).expect("finite operators extend")
}

fn scale_local(r: &Poly, v: &LocalizedPoly, f: &Poly) -> LocalizedPoly {
    LocalizedPoly { num: r * &v.num, k: v.k }.normalized(f)
}

fn sub_local(a: &LocalizedPoly, b: &LocalizedPoly, f: &Poly) -> LocalizedPoly {
    a.add(&LocalizedPoly { num: -&b.num, k: b.k }, f)
}

/// `θ_{r_1}⋯θ_{r_n}(D_S)(v)` with each `θ_r(L)(v) = r·L(v) − L(r·v)`.
fn theta_chain(d: &LocalOperator, rs: &[Poly], v: &LocalizedPoly) -> LocalizedPoly {
    let f = d.f();
    match rs.split_first() {
        None => d.apply(v),
        Some((r, rest)) => {
            let a = scale_local(r, &theta_chain(d, rest, v), f);
            let b = theta_chain(d, rest, &scale_local(r, v, f));
            sub_local(&a, &b, f)
        }
    }
}

proptest! {
    #![proptest_config(cases(100))]

    #[test]
    fn commutative_square(seed in any::<u64>()) {
        let mut r = rng(seed);
        let vars = xs(2);
        let d = random_weyl(&mut r, &vars, 2, 3);
        let f = [x(), &x() + &Poly::one(), &(&x() * &Poly::x(2)) + &Poly::one()][seed as usize % 3].clone();
        let u = random_poly(&mut r, &vars, 4, 4);
        let ds = local_op(&d, &f);
        prop_assert_eq!(ds.apply(&LocalizedPoly::embed(u.clone())), LocalizedPoly::embed(d.apply(&u)));
    }

    #[test]
    fn defining_recursion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let vars = xs(2);
        let d = random_weyl(&mut r, &vars, 2, 3);
        let f = [x(), &x() + &Poly::one()][seed as usize % 2].clone();
        let v = random_local_input(&mut r, &vars);
        let ds = local_op(&d, &f);
        let tds = local_op(&d.theta(&f), &f);
        let lhs = scale_local(&f, &ds.apply(&v), &f);
        let rhs = tds.apply(&v).add(&ds.apply(&scale_local(&f, &v, &f)), &f);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn laurent_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_univariate_weyl(&mut r, 3, 3);
        let v = random_local_input(&mut r, &xs(1));
        let out = local_op(&d, &x()).apply(&v);
        prop_assert_eq!(laurent_of(&out), laurent_apply(&d, &laurent_of(&v)));
    }

    #[test]
    fn order_is_preserved(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_univariate_weyl(&mut r, 3, 2);
        let n = d.finite_order().unwrap() as usize;
        let ds = local_op(&d, &x());
        let rs: Vec<Poly> = (0..=n).map(|_| random_poly(&mut r, &xs(1), 2, 2)).collect();
        for _ in 0..3 {
            let v = random_local_input(&mut r, &xs(1));
            prop_assert!(theta_chain(&ds, &rs, &v).num.is_zero());
        }
    }
}

#[test]
fn glue_recovers_finite_operators() {
    let mut r = rng(11);
    let (f, g) = (x(), &x() + &Poly::one());
    for _ in 0..20 {
        let d = random_univariate_weyl(&mut r, 4, 3);
        let res = glue(&local_op(&d, &f), &local_op(&d, &g), 10).unwrap();
        for (u, v) in &res.table {
            assert_eq!(*v, d.apply(u));
        }
        assert_eq!(res.operator.as_ref(), Some(&d));
    }
}

#[test]
fn glue_contracts() {
    let d = WeylOp::derivative(Variable::x(1), 1);
    let twice = d.scale(&q(2));
    let r = glue(&local_op(&d, &x()), &local_op(&twice, &(&x() + &Poly::one())), 4);
    assert!(matches!(r, Err(LocalizeError::NotCompatible(_))));
    let r = glue(&local_op(&d, &x()), &local_op(&d, &x().pow(2)), 4);
    assert!(matches!(r, Err(LocalizeError::NotCoprime(..))));
    let mult = WeylOp::mult(&(&x().pow(2) + &Poly::from_int(3)));
    let res = glue(&local_op(&mult, &x()), &local_op(&mult, &(&x() + &Poly::one())), 6).unwrap();
    assert_eq!(res.operator, Some(mult));
}

#[test]
fn localized_derivative_examples() {
    let inv = LocalizedPoly { num: Poly::one(), k: 1 };
    let d1 = local_op(&WeylOp::derivative(Variable::x(1), 1), &x());
    let d2 = local_op(&WeylOp::derivative(Variable::x(1), 2), &x());
    assert_eq!(d1.apply(&inv), LocalizedPoly { num: Poly::from_int(-1), k: 2 });
    assert_eq!(d2.apply(&inv), LocalizedPoly { num: Poly::from_int(2), k: 3 });
    assert_eq!(d1.apply(&LocalizedPoly { num: Poly::one(), k: 2 }), LocalizedPoly { num: Poly::from_int(-2), k: 3 });
    // a numerator divisible by f is normalized away
    let u = LocalizedPoly { num: &x() * &(&x() + &Poly::one()), k: 3 };
    let v = LocalizedPoly { num: &x() + &Poly::one(), k: 2 };
    assert_eq!(d1.apply(&u), d1.apply(&v));
}

#[test]
fn shift_does_not_extend() {
    let sh = OpExpr::family(FamilyTermSpec::shift());
    assert!(matches!(extend(&sh, &x(), 10), Err(LocalizeError::InfiniteLocalOrder(_))));
}

#[test]
fn hom_out_of_localizations() {
    assert_eq!(hom_vanishing(&x()), Ok(HomVerdict::ZeroModule));
    assert_eq!(hom_vanishing(&(&x() + &Poly::one())), Ok(HomVerdict::ZeroModule));
    assert_eq!(hom_vanishing(&Poly::from_int(2)), Ok(HomVerdict::AllOfR));
    assert!(hom_vanishing(&Poly::zero()).is_err());
}
