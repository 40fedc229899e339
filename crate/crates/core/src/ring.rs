//! Sparse multivariate polynomials over ℚ in variables `x1, x2, …` and
//! monomial ideals described by finitely many generators plus parametric
//! generator families.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::{BigInt, One, Signed, Zero};

use crate::Rational;

/// A polynomial variable, identified by an index `≥ 1`.
///
/// Indices below [`Variable::Y_BASE`] are the variables `x1, x2, …`; the
/// indices from `Y_BASE` on form a second family `y, y1, y2, …` used for
/// variables adjoined next to an `x`-family (`y` is `y0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variable(pub u64);

impl Variable {
    pub const Y_BASE: u64 = 1 << 62;

    pub fn new(index: u64) -> Self {
        assert!(index >= 1, "variable indices start at 1");
        Variable(index)
    }

    /// `x_i`.
    pub fn x(i: u64) -> Self {
        assert!((1..Self::Y_BASE).contains(&i), "x-index out of range");
        Variable(i)
    }

    /// `y_j`; `y(0)` is written `y`.
    pub fn y(j: u64) -> Self {
        Variable(Self::Y_BASE + j)
    }

    pub fn index(self) -> u64 {
        self.0
    }

    pub fn is_y(self) -> bool {
        self.0 >= Self::Y_BASE
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.checked_sub(Self::Y_BASE) {
            Some(0) => f.write_str("y"),
            Some(j) => write!(f, "y{j}"),
            None => write!(f, "x{}", self.0),
        }
    }
}

/// Power product of variables. Exponents are positive; the empty monomial is 1.
///
/// Ordered graded-lexicographically: higher total degree is greater, ties are
/// broken by the exponent of the lowest-indexed variable where they differ.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<(Variable, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { exps: Vec::new() }
    }

    pub fn var(v: Variable) -> Self {
        Self::var_pow(v, 1)
    }

    pub fn var_pow(v: Variable, e: u32) -> Self {
        if e == 0 {
            Self::one()
        } else {
            Monomial { exps: vec![(v, e)] }
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Variable, u32)>) -> Self {
        let mut map: BTreeMap<Variable, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v).or_default() += e;
        }
        Monomial { exps: map.into_iter().filter(|(_, e)| *e > 0).collect() }
    }

    pub fn exponents(&self) -> &[(Variable, u32)] {
        &self.exps
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|(_, e)| e).sum()
    }

    pub fn exponent(&self, v: Variable) -> u32 {
        self.exps.binary_search_by_key(&v, |p| p.0).map_or(0, |i| self.exps[i].1)
    }

    pub fn vars(&self) -> impl Iterator<Item = Variable> + '_ {
        self.exps.iter().map(|p| p.0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() || j < other.exps.len() {
            match (self.exps.get(i), other.exps.get(j)) {
                (Some(a), Some(b)) if a.0 == b.0 => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if a.0 < b.0 => {
                    out.push(*a);
                    i += 1;
                }
                (Some(a), None) => {
                    out.push(*a);
                    i += 1;
                }
                (_, Some(b)) => {
                    out.push(*b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Monomial { exps: out }
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.exps.iter().all(|&(v, e)| other.exponent(v) >= e)
    }

    /// `other / self` when `self` divides `other`.
    pub fn quotient(&self, other: &Monomial) -> Option<Monomial> {
        if !self.divides(other) {
            return None;
        }
        Some(Monomial {
            exps: other
                .exps
                .iter()
                .filter_map(|&(v, e)| {
                    let r = e - self.exponent(v);
                    (r > 0).then_some((v, r))
                })
                .collect(),
        })
    }

    pub fn with_exponent(&self, v: Variable, e: u32) -> Monomial {
        let mut exps: Vec<_> = self.exps.iter().copied().filter(|p| p.0 != v).collect();
        if e > 0 {
            exps.push((v, e));
            exps.sort_by_key(|p| p.0);
        }
        Monomial { exps }
    }

    /// Factorial-weighted coefficient of `∂^self` applied to `x^self`, i.e. `Π e!`.
    pub fn factorial_weight(&self) -> BigInt {
        self.exps.iter().map(|&(_, e)| factorial(e as u64)).product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            for (a, b) in self.exps.iter().zip(&other.exps) {
                if a.0 != b.0 {
                    // the side holding the lower-indexed variable is greater
                    return b.0.cmp(&a.0);
                }
                if a.1 != b.1 {
                    return a.1.cmp(&b.1);
                }
            }
            self.exps.len().cmp(&other.exps.len())
        })
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exps.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .exps
            .iter()
            .map(|&(v, e)| if e == 1 { v.to_string() } else { format!("{v}^{e}") })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `e (e-1) ⋯ (e-k+1)`.
pub fn falling_factorial(e: u64, k: u64) -> BigInt {
    if k > e {
        return BigInt::zero();
    }
    ((e - k + 1)..=e).fold(BigInt::one(), |acc, j| acc * BigInt::from(j))
}

/// Sparse polynomial with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn from_int(c: i64) -> Self {
        Self::constant(Rational::from_integer(c.into()))
    }

    pub fn var(v: Variable) -> Self {
        Self::term(Rational::one(), Monomial::var(v))
    }

    pub fn x(index: u64) -> Self {
        Self::var(Variable::new(index))
    }

    pub fn term(c: Rational, m: Monomial) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Rational)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn vars(&self) -> BTreeSet<Variable> {
        self.terms.keys().flat_map(|m| m.vars()).collect()
    }

    /// Greatest term in the graded lexicographic order.
    pub fn leading_term(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    /// `Some((c, v))` when the polynomial is `c · x_v`.
    pub fn as_scaled_variable(&self) -> Option<(Rational, Variable)> {
        let mut it = self.terms.iter();
        match (it.next(), it.next()) {
            (Some((m, c)), None) => match m.exponents() {
                [(v, 1)] => Some((c.clone(), *v)),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect() }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Poly {
        Poly { terms: self.terms.iter().map(|(k, a)| (k.mul(m), a.clone())).collect() }
    }

    pub fn pow(&self, e: u32) -> Poly {
        (0..e).fold(Poly::one(), |acc, _| &acc * self)
    }

    /// `∂^k f / ∂v^k` with falling-factorial coefficients.
    pub fn partial_derive(&self, v: Variable, k: u32) -> Poly {
        if k == 0 {
            return self.clone();
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(v);
            if e < k {
                continue;
            }
            let ff = Rational::from_integer(falling_factorial(e as u64, k as u64));
            out.add_term(m.with_exponent(v, e - k), c * ff);
        }
        out
    }

    /// Applies the derivative multi-index `∂^b` (exponents taken from `b`).
    pub fn derive_multi(&self, b: &Monomial) -> Poly {
        let mut out = Poly::zero();
        'terms: for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut rest = m.clone();
            for &(v, k) in b.exponents() {
                let e = m.exponent(v);
                if e < k {
                    continue 'terms;
                }
                coeff *= Rational::from_integer(falling_factorial(e as u64, k as u64));
                rest = rest.with_exponent(v, e - k);
            }
            out.add_term(rest, coeff);
        }
        out
    }

    /// Substitutes `g` for the variable `v`.
    pub fn substitute(&self, v: Variable, g: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(v);
            let rest = Poly::term(c.clone(), m.with_exponent(v, 0));
            out = &out + &(&rest * &g.pow(e));
        }
        out
    }

    /// Exact quotient `self / divisor`, or `None` when the division leaves a
    /// remainder.
    pub fn div_exact(&self, divisor: &Poly) -> Option<Poly> {
        let (lm, lc) = divisor.leading_term()?;
        let (lm, lc) = (lm.clone(), lc.clone());
        let mut rem = self.clone();
        let mut quot = Poly::zero();
        while let Some((m, c)) = rem.leading_term() {
            let q_mon = lm.quotient(m)?;
            let q = Poly::term(c / &lc, q_mon);
            rem = &rem - &(&q * divisor);
            quot = &quot + &q;
        }
        Some(quot)
    }
}

impl From<Rational> for Poly {
    fn from(c: Rational) -> Self {
        Poly::constant(c)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

pub fn poly_mul(f: &Poly, g: &Poly) -> Poly {
    f * g
}

pub fn partial_derive(f: &Poly, v: Variable, k: u32) -> Poly {
    f.partial_derive(v, k)
}

pub(crate) fn fmt_rational(c: &Rational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if m.is_one() {
                f.write_str(&fmt_rational(&abs))?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rational(&abs))?;
            }
        }
        Ok(())
    }
}

/// A parametric family of ideal generators.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IdealFamily {
    /// `x_{s+t·i}^{a·i+b}` for all `i ≥ from`.
    PurePowers { s: i64, t: i64, a: i64, b: i64, from: i64 },
    /// `x_i·x_j` for all `i ≠ j` with both indices in `[lo, hi]` (`hi = None`
    /// for unbounded).
    PairProducts { lo: u64, hi: Option<u64> },
}

impl IdealFamily {
    pub fn pure_powers(s: i64, t: i64, a: i64, b: i64, from: i64) -> Self {
        assert!(t >= 0 && a >= 0, "family slopes must be non-negative");
        for i in [from, from + 1] {
            assert!(s + t * i >= 1, "family variables must have index ≥ 1");
            assert!(a * i + b >= 1, "family exponents must be ≥ 1");
        }
        IdealFamily::PurePowers { s, t, a, b, from }
    }

    /// Exponent of the generator on `v` if `v` belongs to this pure-power family.
    pub fn threshold(&self, v: Variable) -> Option<u32> {
        match *self {
            IdealFamily::PurePowers { s, t, a, b, from } => {
                let idx = v.0 as i64;
                let i = if t == 0 {
                    (idx == s).then_some(from)?
                } else {
                    if (idx - s) % t != 0 {
                        return None;
                    }
                    (idx - s) / t
                };
                (i >= from).then(|| (a * i + b) as u32)
            }
            IdealFamily::PairProducts { .. } => None,
        }
    }

    pub fn pair_range_contains(&self, v: Variable) -> bool {
        match *self {
            IdealFamily::PairProducts { lo, hi } => v.0 >= lo && hi.is_none_or(|h| v.0 <= h),
            IdealFamily::PurePowers { .. } => false,
        }
    }

    /// Step of the variable progression (0 for families not indexed by a
    /// progression).
    pub fn period(&self) -> u64 {
        match *self {
            IdealFamily::PurePowers { t, .. } => t.max(1) as u64,
            IdealFamily::PairProducts { .. } => 1,
        }
    }
}

/// Monomial ideal given by finitely many monomials and parametric families.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MonomialIdealSpec {
    pub finite_generators: Vec<Monomial>,
    pub families: Vec<IdealFamily>,
}

impl MonomialIdealSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(finite_generators: Vec<Monomial>, families: Vec<IdealFamily>) -> Self {
        MonomialIdealSpec { finite_generators, families }
    }

    /// `J = (x_i^{i+1} for i ≥ 1, x_i x_j for i ≠ j)`.
    pub fn hrbek() -> Self {
        Self::new(
            vec![],
            vec![IdealFamily::pure_powers(0, 1, 1, 1, 1), IdealFamily::PairProducts { lo: 1, hi: None }],
        )
    }

    /// `J = (x_1, x_2^2, x_3^3, …)`.
    pub fn staircase() -> Self {
        Self::new(vec![], vec![IdealFamily::pure_powers(0, 1, 1, 0, 1)])
    }

    /// `J' = (x_1^2, x_2^2, x_3^2, …)`.
    pub fn squares() -> Self {
        Self::new(vec![], vec![IdealFamily::pure_powers(0, 1, 0, 2, 1)])
    }

    /// Least exponent `e` with `x_v^e` in the ideal through a pure-power family.
    pub fn threshold(&self, v: Variable) -> Option<u32> {
        let fam = self.families.iter().filter_map(|f| f.threshold(v));
        let fin = self.finite_generators.iter().filter_map(|g| match g.exponents() {
            [(w, e)] if *w == v => Some(*e),
            _ => None,
        });
        fam.chain(fin).min()
    }

    /// Pair-product families whose range contains `v`.
    pub fn in_pair_range(&self, v: Variable) -> bool {
        self.families.iter().any(|f| f.pair_range_contains(v))
    }

    /// Whether two distinct variables `v`, `w` multiply into the ideal.
    pub fn pair_kills(&self, v: Variable, w: Variable) -> bool {
        v != w && self.families.iter().any(|f| f.pair_range_contains(v) && f.pair_range_contains(w))
    }

    /// Largest variable index named by a finite generator.
    pub fn max_finite_var(&self) -> u64 {
        self.finite_generators.iter().flat_map(|m| m.vars()).map(|v| v.0).max().unwrap_or(0)
    }

    /// Common period of the variable progressions of all families.
    pub fn period(&self) -> u64 {
        self.families.iter().map(IdealFamily::period).fold(1, lcm)
    }

    /// Index beyond which every family behaves periodically-affinely.
    pub fn horizon(&self) -> u64 {
        let fam = self.families.iter().map(|f| match *f {
            IdealFamily::PurePowers { s, t, from, .. } => (s + t * from).max(1) as u64,
            IdealFamily::PairProducts { lo, hi } => hi.unwrap_or(lo),
        });
        fam.chain(std::iter::once(self.max_finite_var())).max().unwrap_or(0)
    }
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 { a.max(b) } else { a / gcd(a, b) * b }
}

/// Membership of a monomial in a monomial ideal.
pub fn ideal_member(m: &Monomial, ideal: &MonomialIdealSpec) -> bool {
    if ideal.finite_generators.iter().any(|g| g.divides(m)) {
        return true;
    }
    for fam in &ideal.families {
        match fam {
            IdealFamily::PurePowers { .. } => {
                if m.exponents().iter().any(|&(v, e)| fam.threshold(v).is_some_and(|th| e >= th)) {
                    return true;
                }
            }
            IdealFamily::PairProducts { .. } => {
                if m.vars().filter(|&v| fam.pair_range_contains(v)).nth(1).is_some() {
                    return true;
                }
            }
        }
    }
    false
}

/// Drops every term whose monomial lies in the ideal.
pub fn reduce_mod(f: &Poly, ideal: &MonomialIdealSpec) -> Poly {
    Poly::from_terms(f.terms().filter(|(m, _)| !ideal_member(m, ideal)).map(|(m, c)| (m.clone(), c.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn x(i: u64) -> Poly {
        Poly::x(i)
    }

    fn xm(i: u64, e: u32) -> Monomial {
        Monomial::var_pow(Variable::new(i), e)
    }

    #[test]
    fn poly_mul_examples() {
        let one = Poly::one();
        assert_eq!(&(&x(1) + &one) * &(&x(1) - &one), &x(1).pow(2) - &one);
        assert_eq!((&x(1) * &x(2)).to_string(), "x1*x2");
        let a = Poly::term(q(1, 2), xm(2, 1));
        let b = Poly::term(q(4, 1), xm(2, 3));
        assert_eq!(&a * &b, Poly::term(q(2, 1), xm(2, 4)));
    }

    #[test]
    fn partial_derive_examples() {
        let v1 = Variable::new(1);
        assert_eq!(x(1).pow(3).partial_derive(v1, 1), Poly::term(q(3, 1), xm(1, 2)));
        assert!(x(1).pow(3).partial_derive(Variable::new(2), 1).is_zero());
        let f = &x(1).pow(2) * &x(3);
        assert_eq!(f.partial_derive(v1, 2), x(3).scale(&q(2, 1)));
    }

    #[test]
    fn ideal_membership_examples() {
        let j = MonomialIdealSpec::hrbek();
        assert!(ideal_member(&xm(2, 3), &j));
        assert!(!ideal_member(&xm(2, 2), &j));
        assert!(ideal_member(&xm(1, 1).mul(&xm(5, 1)), &j));
        assert!(!ideal_member(&Monomial::one(), &j));
    }

    #[test]
    fn reduce_examples() {
        let j = MonomialIdealSpec::hrbek();
        assert_eq!(reduce_mod(&(&x(2).pow(3) + &x(2)), &j), x(2));
        assert!(reduce_mod(&Poly::zero(), &j).is_zero());
        assert_eq!(reduce_mod(&(&(&x(1) * &x(2)) + &Poly::from_int(5)), &j), Poly::from_int(5));
    }

    #[test]
    fn printing_is_graded_lex() {
        let f = &(&(&x(1).pow(2) * &x(3)) - &Poly::constant(q(1, 2))) + &x(2).pow(3);
        assert_eq!(f.to_string(), "x1^2*x3 + x2^3 - 1/2");
        assert_eq!((&x(2) - &x(1)).to_string(), "-x1 + x2");
        assert_eq!(Poly::zero().to_string(), "0");
    }

    #[test]
    fn exact_division() {
        let f = &x(1) + &Poly::one();
        let g = &(&f * &f) * &x(2);
        assert_eq!(g.div_exact(&f), Some(&f * &x(2)));
        assert_eq!(x(1).div_exact(&f), None);
        assert_eq!(Poly::zero().div_exact(&f), Some(Poly::zero()));
    }

    #[test]
    fn substitution_shifts() {
        let v = Variable::new(1);
        let f = x(1).pow(2);
        assert_eq!(f.substitute(v, &(&x(1) + &Poly::one())).to_string(), "x1^2 + 2*x1 + 1");
    }

    #[test]
    fn thresholds() {
        let j = MonomialIdealSpec::hrbek();
        assert_eq!(j.threshold(Variable::new(4)), Some(5));
        assert!(j.pair_kills(Variable::new(1), Variable::new(9)));
        let s = MonomialIdealSpec::squares();
        assert_eq!(s.threshold(Variable::new(7)), Some(2));
        assert!(!s.in_pair_range(Variable::new(7)));
    }
}
