//! Shared generators and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num::{BigInt, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transdiff::ring::{Monomial, Poly, Variable};
use transdiff::weyl::WeylOp;
use transdiff::Rational;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

/// Exponent vector keyed by raw variable index.
pub type Exps = BTreeMap<u64, u32>;

/// Oracle polynomial: plain map from exponent vectors to coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dense(pub BTreeMap<Exps, Rational>);

impl Dense {
    pub fn monomial(e: Exps) -> Self {
        let mut m = BTreeMap::new();
        m.insert(e, Rational::one());
        Dense(m)
    }

    pub fn add_term(&mut self, e: Exps, c: Rational) {
        let slot = self.0.entry(e.clone()).or_insert_with(Rational::zero);
        *slot += c;
        if slot.is_zero() {
            self.0.remove(&e);
        }
    }

    pub fn add(&mut self, other: &Dense, scale: &Rational) {
        for (e, c) in &other.0 {
            self.add_term(e.clone(), c * scale);
        }
    }

    /// `∂^k/∂v^k` by the falling-factorial rule.
    pub fn derive(&self, v: u64, k: u32) -> Dense {
        let mut out = Dense::default();
        for (e, c) in &self.0 {
            let ev = e.get(&v).copied().unwrap_or(0);
            if ev < k {
                continue;
            }
            let ff: i64 = (0..k).map(|j| (ev - j) as i64).product();
            let mut e2 = e.clone();
            if ev == k {
                e2.remove(&v);
            } else {
                e2.insert(v, ev - k);
            }
            out.add_term(e2, c * q(ff));
        }
        out
    }

    pub fn mul_var(&self, v: u64, k: u32) -> Dense {
        let mut out = Dense::default();
        for (e, c) in &self.0 {
            let mut e2 = e.clone();
            if k > 0 {
                *e2.entry(v).or_insert(0) += k;
            }
            out.add_term(e2, c.clone());
        }
        out
    }

    pub fn to_poly(&self) -> Poly {
        Poly::from_terms(self.0.iter().map(|(e, c)| {
            (Monomial::from_pairs(e.iter().map(|(&v, &k)| (Variable(v), k))), c.clone())
        }))
    }

    pub fn from_poly(p: &Poly) -> Dense {
        let mut out = Dense::default();
        for (m, c) in p.terms() {
            let e: Exps = m.exponents().iter().map(|(v, k)| (v.0, *k)).collect();
            out.add_term(e, c.clone());
        }
        out
    }
}

/// Oracle application of a normal-form Weyl operator: `x^a ∂^b` acts on
/// each monomial by falling factorials.
pub fn oracle_weyl_apply(a: &WeylOp, f: &Poly) -> Poly {
    let src = Dense::from_poly(f);
    let mut out = Dense::default();
    for (x, d, c) in a.terms() {
        let mut t = src.clone();
        for (v, k) in d.exponents() {
            t = t.derive(v.0, *k);
        }
        for (v, k) in x.exponents() {
            t = t.mul_var(v.0, *k);
        }
        out.add(&t, c);
    }
    out.to_poly()
}

/// All monomials of total degree `≤ deg` in the given variables.
pub fn monomials_up_to(vars: &[Variable], deg: u32) -> Vec<Monomial> {
    fn go(vars: &[Variable], deg: u32, acc: Vec<(Variable, u32)>, out: &mut Vec<Monomial>) {
        match vars.split_first() {
            None => out.push(Monomial::from_pairs(acc)),
            Some((v, rest)) => {
                for k in 0..=deg {
                    let mut a = acc.clone();
                    if k > 0 {
                        a.push((*v, k));
                    }
                    go(rest, deg - k, a, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    go(vars, deg, Vec::new(), &mut out);
    out
}

pub fn xs(n: u64) -> Vec<Variable> {
    (1..=n).map(Variable::x).collect()
}

pub fn random_monomial(rng: &mut impl Rng, vars: &[Variable], max_deg: u32) -> Monomial {
    let deg = rng.gen_range(0..=max_deg);
    let mut pairs: BTreeMap<Variable, u32> = BTreeMap::new();
    for _ in 0..deg {
        *pairs.entry(vars[rng.gen_range(0..vars.len())]).or_insert(0) += 1;
    }
    Monomial::from_pairs(pairs)
}

pub fn random_rational(rng: &mut impl Rng) -> Rational {
    let n: i64 = rng.gen_range(-5..=5);
    let d: i64 = if rng.gen_bool(0.2) { rng.gen_range(1..=4) } else { 1 };
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn random_poly(rng: &mut impl Rng, vars: &[Variable], max_deg: u32, max_terms: usize) -> Poly {
    let n = rng.gen_range(0..=max_terms);
    Poly::from_terms((0..n).map(|_| (random_monomial(rng, vars, max_deg), random_rational(rng))))
}

pub fn random_weyl(rng: &mut impl Rng, vars: &[Variable], max_deg: u32, max_terms: usize) -> WeylOp {
    let mut op = WeylOp::zero();
    for _ in 0..rng.gen_range(1..=max_terms) {
        let x = random_monomial(rng, vars, max_deg);
        let d = random_monomial(rng, vars, max_deg);
        op.add_term(x, d, random_rational(rng));
    }
    op
}

/// Nonzero operator on one variable with polynomial coefficients.
pub fn random_univariate_weyl(rng: &mut impl Rng, max_order: u32, max_coef_deg: u32) -> WeylOp {
    let x = Variable::x(1);
    loop {
        let mut op = WeylOp::zero();
        for k in 0..=rng.gen_range(0..=max_order) {
            let c = random_rational(rng);
            let e = rng.gen_range(0..=max_coef_deg);
            op.add_term(Monomial::var_pow(x, e), Monomial::var_pow(x, k), c);
        }
        if !op.is_zero() {
            return op;
        }
    }
}
