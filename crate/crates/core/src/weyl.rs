//! Finite differential operators with polynomial coefficients, kept in the
//! normal order `x^a ∘ ∂^b`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num::{BigInt, One, Signed, Zero};
use thiserror::Error;

use crate::ring::{falling_factorial, fmt_rational, Monomial, Poly, Variable};
use crate::Rational;

/// Orders of partial derivatives, `∂^b = Π ∂_v^{b_v}`. Shares the monomial
/// representation: the exponent of `v` is the derivative order in `v`.
pub type DerivMultiIndex = Monomial;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WeylError {
    #[error("the zero operator has no order")]
    ZeroOperator,
}

/// Raw factor of an operator word, composed left to right.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Factor {
    Mul(Poly),
    Der(Variable, u32),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WeylOp {
    terms: BTreeMap<(Monomial, DerivMultiIndex), Rational>,
}

fn binomial(n: u64, k: u64) -> BigInt {
    falling_factorial(n, k) / crate::ring::factorial(k)
}

impl WeylOp {
    pub fn zero() -> Self {
        WeylOp { terms: BTreeMap::new() }
    }

    pub fn identity() -> Self {
        Self::scalar(Rational::one())
    }

    pub fn scalar(c: Rational) -> Self {
        Self::term(c, Monomial::one(), Monomial::one())
    }

    pub fn term(c: Rational, x: Monomial, d: DerivMultiIndex) -> Self {
        let mut op = Self::zero();
        op.add_term(x, d, c);
        op
    }

    /// Multiplication by a polynomial.
    pub fn mult(p: &Poly) -> Self {
        let mut op = Self::zero();
        for (m, c) in p.terms() {
            op.add_term(m.clone(), Monomial::one(), c.clone());
        }
        op
    }

    /// `∂^k / ∂v^k`.
    pub fn derivative(v: Variable, k: u32) -> Self {
        Self::term(Rational::one(), Monomial::one(), Monomial::var_pow(v, k))
    }

    pub fn add_term(&mut self, x: Monomial, d: DerivMultiIndex, c: Rational) {
        if c.is_zero() {
            return;
        }
        let key = (x, d);
        let entry = self.terms.entry(key.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &DerivMultiIndex, &Rational)> {
        self.terms.iter().map(|((x, d), c)| (x, d, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn scale(&self, c: &Rational) -> WeylOp {
        if c.is_zero() {
            return WeylOp::zero();
        }
        WeylOp { terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect() }
    }

    /// Every variable occurring in a coefficient or a derivative.
    pub fn vars(&self) -> BTreeSet<Variable> {
        self.terms.keys().flat_map(|(x, d)| x.vars().chain(d.vars())).collect()
    }

    pub fn deriv_vars(&self) -> BTreeSet<Variable> {
        self.terms.keys().flat_map(|(_, d)| d.vars()).collect()
    }

    /// Largest total degree of the multiplication parts.
    pub fn coefficient_degree(&self) -> u32 {
        self.terms.keys().map(|(x, _)| x.degree()).max().unwrap_or(0)
    }

    pub fn as_scalar(&self) -> Option<Rational> {
        if self.terms.is_empty() {
            return Some(Rational::zero());
        }
        match self.terms.iter().next() {
            Some(((x, d), c)) if self.terms.len() == 1 && x.is_one() && d.is_one() => Some(c.clone()),
            _ => None,
        }
    }

    /// Normal-ordered product `self ∘ other`, using
    /// `∂^b x^c = Σ_k C(b,k) c!/(c-k)! x^{c-k} ∂^{b-k}` per variable.
    pub fn compose(&self, other: &WeylOp) -> WeylOp {
        let mut out = WeylOp::zero();
        for ((a, b), c1) in &self.terms {
            for ((c, d), c2) in &other.terms {
                let shared: Vec<(Variable, u32, u32)> = b
                    .exponents()
                    .iter()
                    .filter_map(|&(v, bv)| {
                        let cv = c.exponent(v);
                        (cv > 0).then_some((v, bv, cv))
                    })
                    .collect();
                let mut ks = vec![0u32; shared.len()];
                loop {
                    let mut coeff = c1 * c2;
                    let mut xpart = c.clone();
                    let mut dpart = b.clone();
                    for (&(v, bv, cv), &k) in shared.iter().zip(&ks) {
                        if k == 0 {
                            continue;
                        }
                        let w = binomial(bv as u64, k as u64) * falling_factorial(cv as u64, k as u64);
                        coeff *= Rational::from_integer(w);
                        xpart = xpart.with_exponent(v, cv - k);
                        dpart = dpart.with_exponent(v, bv - k);
                    }
                    out.add_term(a.mul(&xpart), dpart.mul(d), coeff);
                    // odometer over 0 ≤ k_v ≤ min(b_v, c_v)
                    let mut i = 0;
                    loop {
                        if i == ks.len() {
                            break;
                        }
                        let (_, bv, cv) = shared[i];
                        if ks[i] < bv.min(cv) {
                            ks[i] += 1;
                            break;
                        }
                        ks[i] = 0;
                        i += 1;
                    }
                    if i == ks.len() {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Normal form of a word of multiplication and derivative factors.
    pub fn normal_form(factors: &[Factor]) -> WeylOp {
        factors.iter().fold(WeylOp::identity(), |acc, f| {
            let op = match f {
                Factor::Mul(p) => WeylOp::mult(p),
                Factor::Der(v, k) => WeylOp::derivative(*v, *k),
            };
            acc.compose(&op)
        })
    }

    /// `θ_r(A) = r∘A − A∘r`.
    pub fn theta(&self, r: &Poly) -> WeylOp {
        let m = WeylOp::mult(r);
        &m.compose(self) - &self.compose(&m)
    }

    pub fn apply(&self, f: &Poly) -> Poly {
        let mut out = Poly::zero();
        for ((x, d), c) in &self.terms {
            let g = f.derive_multi(d);
            if g.is_zero() {
                continue;
            }
            out = &out + &g.mul_monomial(x).scale(c);
        }
        out
    }

    /// Total derivative degree of the highest term.
    pub fn finite_order(&self) -> Result<u32, WeylError> {
        self.terms.keys().map(|(_, d)| d.degree()).max().ok_or(WeylError::ZeroOperator)
    }

    /// A monomial `x^b` with `self(x^b) ≠ 0`, taken from a derivative index
    /// that is minimal for the componentwise order.
    pub fn nonzero_witness(&self) -> Option<Poly> {
        let ds: BTreeSet<&Monomial> = self.terms.keys().map(|(_, d)| d).collect();
        let minimal = ds.iter().find(|d| !ds.iter().any(|e| e != *d && e.divides(d)))?;
        let f = Poly::term(Rational::one(), (*minimal).clone());
        debug_assert!(!self.apply(&f).is_zero());
        Some(f)
    }
}

impl Add for &WeylOp {
    type Output = WeylOp;
    fn add(self, rhs: &WeylOp) -> WeylOp {
        let mut out = self.clone();
        for ((x, d), c) in &rhs.terms {
            out.add_term(x.clone(), d.clone(), c.clone());
        }
        out
    }
}

impl Sub for &WeylOp {
    type Output = WeylOp;
    fn sub(self, rhs: &WeylOp) -> WeylOp {
        self + &(-rhs)
    }
}

impl Neg for &WeylOp {
    type Output = WeylOp;
    fn neg(self) -> WeylOp {
        self.scale(&-Rational::one())
    }
}

pub fn compose(a: &WeylOp, b: &WeylOp) -> WeylOp {
    a.compose(b)
}

pub fn theta_poly(r: &Poly, a: &WeylOp) -> WeylOp {
    a.theta(r)
}

pub fn apply_finite(a: &WeylOp, f: &Poly) -> Poly {
    a.apply(f)
}

pub fn finite_order(a: &WeylOp) -> Result<u32, WeylError> {
    a.finite_order()
}

impl fmt::Display for WeylOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        // highest derivative order first, then coefficient monomial
        let mut entries: Vec<_> = self.terms.iter().collect();
        entries.sort_by(|((x1, d1), _), ((x2, d2), _)| d2.cmp(d1).then(x2.cmp(x1)));
        for (k, ((x, d), c)) in entries.into_iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || (x.is_one() && d.is_one()) {
                factors.push(fmt_rational(&abs));
            }
            if !x.is_one() {
                factors.push(x.to_string());
            }
            for &(v, e) in d.exponents() {
                factors.push(if e == 1 { format!("d({v})") } else { format!("d({v})^{e}") });
            }
            f.write_str(&factors.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u64) -> Variable {
        Variable::new(i)
    }

    fn d(i: u64, k: u32) -> WeylOp {
        WeylOp::derivative(v(i), k)
    }

    fn xop(i: u64) -> WeylOp {
        WeylOp::mult(&Poly::x(i))
    }

    fn int(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    /// Evaluation oracle: two operators agree on `x1^n`, `n ≤ 5`.
    fn agree_on_powers(a: &WeylOp, raw: &[Factor]) {
        for n in 0..=5 {
            let f = Poly::x(1).pow(n);
            let expected = raw.iter().rev().fold(f.clone(), |acc, fac| match fac {
                Factor::Mul(p) => p * &acc,
                Factor::Der(w, k) => acc.partial_derive(*w, *k),
            });
            assert_eq!(a.apply(&f), expected, "mismatch on x1^{n}");
        }
    }

    #[test]
    fn normal_form_examples() {
        let raw = [Factor::Der(v(1), 1), Factor::Mul(Poly::x(1))];
        let nf = WeylOp::normal_form(&raw);
        assert_eq!(nf, &xop(1).compose(&d(1, 1)) + &WeylOp::identity());
        agree_on_powers(&nf, &raw);

        let raw = [Factor::Mul(Poly::x(1)), Factor::Der(v(1), 1)];
        assert_eq!(WeylOp::normal_form(&raw).to_string(), "x1*d(x1)");

        let raw = [Factor::Der(v(1), 2), Factor::Mul(Poly::x(1))];
        let nf = WeylOp::normal_form(&raw);
        assert_eq!(nf.to_string(), "x1*d(x1)^2 + 2*d(x1)");
        agree_on_powers(&nf, &raw);
    }

    #[test]
    fn compose_examples() {
        assert_eq!(d(1, 1).compose(&d(2, 1)).to_string(), "d(x1)*d(x2)");
        assert_eq!(d(1, 1).compose(&xop(1)).to_string(), "x1*d(x1) + 1");
        let euler = xop(1).compose(&d(1, 1));
        assert_eq!(euler.compose(&euler).to_string(), "x1^2*d(x1)^2 + x1*d(x1)");
    }

    #[test]
    fn theta_examples() {
        assert_eq!(d(1, 3).theta(&Poly::x(1)), d(1, 2).scale(&int(-3)));
        assert!(d(1, 1).theta(&Poly::x(2)).is_zero());
        assert_eq!(d(1, 1).theta(&Poly::x(1).pow(2)), xop(1).scale(&int(-2)));
    }

    #[test]
    fn apply_examples() {
        let f = &Poly::x(1).pow(2) * &Poly::x(3);
        assert_eq!(d(1, 2).apply(&f), Poly::x(3).scale(&int(2)));
        assert!(d(1, 2).apply(&Poly::zero()).is_zero());
        let euler = xop(1).compose(&d(1, 1));
        assert_eq!(euler.apply(&Poly::x(1).pow(5)), Poly::x(1).pow(5).scale(&int(5)));
    }

    #[test]
    fn order_examples() {
        assert_eq!((&d(1, 2) + &d(2, 1)).finite_order(), Ok(2));
        assert_eq!(WeylOp::mult(&Poly::x(1).pow(3)).finite_order(), Ok(0));
        let a = xop(2).compose(&d(1, 1)).compose(&d(3, 1));
        assert_eq!(a.finite_order(), Ok(2));
        assert_eq!(WeylOp::zero().finite_order(), Err(WeylError::ZeroOperator));
        // θ-definition check: a nonzero double chain, all triple chains vanish
        let vars = [v(1), v(2), v(3)];
        assert!(!a.theta(&Poly::x(1)).theta(&Poly::x(3)).is_zero());
        for &p in &vars {
            for &q in &vars {
                for &r in &vars {
                    let t = a.theta(&Poly::var(p)).theta(&Poly::var(q)).theta(&Poly::var(r));
                    assert!(t.is_zero());
                }
            }
        }
    }

    #[test]
    fn witness_is_nonzero() {
        let a = &d(1, 2).compose(&d(2, 1)) + &xop(3).compose(&d(1, 1));
        let w = a.nonzero_witness().unwrap();
        assert!(!a.apply(&w).is_zero());
        assert!(WeylOp::zero().nonzero_witness().is_none());
    }

    #[test]
    fn display() {
        let a = &d(1, 2).scale(&Rational::new(1.into(), 2.into())) - &xop(2).compose(&d(3, 1));
        assert_eq!(a.to_string(), "1/2*d(x1)^2 - x2*d(x3)");
        assert_eq!(WeylOp::identity().to_string(), "1");
    }
}
