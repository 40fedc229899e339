//! Operators on principal localizations `R[f⁻¹]`, gluing over two-chart
//! covers of `k[x]`, and the Hom-vanishing check behind colocalization.
//!
//! An operator `D` of finite `f`-order `n` extends uniquely; the extension
//! is computed from
//!
//! ```text
//! D_S(a / f^k) = ( θ_f(D)_S(a / f^k) + D_S(a / f^{k-1}) ) / f
//! ```
//!
//! which bottoms out at `k = 0` (where `D_S = D`) or at `θ_f^n(D)`, which
//! commutes with `f`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use num::{One, Zero};
use thiserror::Error;

use crate::order::{r_order, OrderVerdict};
use crate::ring::{Monomial, Poly, Variable};
use crate::stream::OpExpr;
use crate::weyl::WeylOp;
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("the operator has infinite {0}-order and does not extend")]
    InfiniteLocalOrder(Poly),
    #[error("{0}-order not settled within cap {1}")]
    OrderUnknown(Poly, u64),
    #[error("cannot localize at zero")]
    ZeroDenominator,
    #[error("chart values disagree on {0}")]
    NotCompatible(Poly),
    #[error("{0} and {1} generate a proper ideal")]
    NotCoprime(Poly, Poly),
    #[error("{0} is not univariate in x1")]
    NotUnivariate(Poly),
}

/// `num / f^k` for the ambient denominator `f`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LocalizedPoly {
    pub num: Poly,
    pub k: u32,
}

impl LocalizedPoly {
    pub fn embed(num: Poly) -> Self {
        LocalizedPoly { num, k: 0 }
    }

    /// Cancels factors of `f` from the numerator.
    pub fn normalized(mut self, f: &Poly) -> Self {
        if self.num.is_zero() {
            self.k = 0;
        }
        while self.k > 0 {
            match self.num.div_exact(f) {
                Some(q) => {
                    self.num = q;
                    self.k -= 1;
                }
                None => break,
            }
        }
        self
    }

    pub fn add(&self, other: &LocalizedPoly, f: &Poly) -> LocalizedPoly {
        let k = self.k.max(other.k);
        let a = &self.num * &f.pow(k - self.k);
        let b = &other.num * &f.pow(k - other.k);
        LocalizedPoly { num: &a + &b, k }.normalized(f)
    }

    pub fn div_f(&self, f: &Poly) -> LocalizedPoly {
        LocalizedPoly { num: self.num.clone(), k: self.k + 1 }.normalized(f)
    }

    pub fn render(&self, f: &Poly) -> String {
        match self.k {
            0 => self.num.to_string(),
            1 => format!("({}) / ({f})", self.num),
            k => format!("({}) / ({f})^{k}", self.num),
        }
    }
}

/// Extension of an operator of finite `f`-order to `R[f⁻¹]`.
#[derive(Debug)]
pub struct LocalOperator {
    base: OpExpr,
    f: Poly,
    f_order: u64,
    /// `θ_f^j(D)` for `j ≤ f_order`.
    chain: Vec<OpExpr>,
    memo: Mutex<HashMap<(usize, Poly, u32), LocalizedPoly>>,
}

pub fn extend(d: &OpExpr, f: &Poly, cap: u64) -> Result<LocalOperator, LocalizeError> {
    if f.is_zero() {
        return Err(LocalizeError::ZeroDenominator);
    }
    let n = match r_order(d, f, cap) {
        OrderVerdict::Exact(n) => n,
        OrderVerdict::InfiniteCertified(_) => return Err(LocalizeError::InfiniteLocalOrder(f.clone())),
        OrderVerdict::AtLeast(_) => return Err(LocalizeError::OrderUnknown(f.clone(), cap)),
    };
    let mut chain = vec![d.clone()];
    for _ in 0..n {
        let next = chain.last().unwrap().theta(f);
        chain.push(next);
    }
    Ok(LocalOperator { base: d.clone(), f: f.clone(), f_order: n, chain, memo: Mutex::new(HashMap::new()) })
}

impl LocalOperator {
    pub fn base(&self) -> &OpExpr {
        &self.base
    }

    pub fn f(&self) -> &Poly {
        &self.f
    }

    pub fn f_order(&self) -> u64 {
        self.f_order
    }

    pub fn apply(&self, v: &LocalizedPoly) -> LocalizedPoly {
        let v = v.clone().normalized(&self.f);
        self.eval(0, &v.num, v.k)
    }

    /// `θ_f^j(D)_S(num / f^k)`.
    fn eval(&self, j: usize, num: &Poly, k: u32) -> LocalizedPoly {
        let key = (j, num.clone(), k);
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return v.clone();
        }
        let op = &self.chain[j];
        let out = if k == 0 {
            LocalizedPoly::embed(op.apply(num))
        } else if j + 1 == self.chain.len() {
            // commutes with f
            LocalizedPoly { num: op.apply(num), k }.normalized(&self.f)
        } else {
            let a = self.eval(j + 1, num, k);
            let b = self.eval(j, num, k - 1);
            a.add(&b, &self.f).div_f(&self.f)
        };
        self.memo.lock().unwrap().entry(key).or_insert(out).clone()
    }
}

pub fn apply_local(d: &LocalOperator, v: &LocalizedPoly) -> LocalizedPoly {
    d.apply(v)
}

// ---------------------------------------------------------------------------
// Univariate gluing

type Dense = Vec<Rational>;

fn x1() -> Variable {
    Variable::x(1)
}

fn to_dense(p: &Poly) -> Result<Dense, LocalizeError> {
    if p.vars().iter().any(|&v| v != x1()) {
        return Err(LocalizeError::NotUnivariate(p.clone()));
    }
    let deg = p.degree().unwrap_or(0) as usize;
    let mut out = vec![Rational::zero(); deg + 1];
    for (m, c) in p.terms() {
        out[m.exponent(x1()) as usize] = c.clone();
    }
    Ok(trim(out))
}

fn from_dense(p: &[Rational]) -> Poly {
    Poly::from_terms(p.iter().enumerate().map(|(e, c)| (Monomial::var_pow(x1(), e as u32), c.clone())))
}

fn trim(mut p: Dense) -> Dense {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn dense_sub_scaled(a: &[Rational], b: &[Rational], c: &Rational, shift: usize) -> Dense {
    let mut out = a.to_vec();
    if out.len() < b.len() + shift {
        out.resize(b.len() + shift, Rational::zero());
    }
    for (i, bi) in b.iter().enumerate() {
        out[i + shift] -= bi * c;
    }
    trim(out)
}

fn dense_mul(a: &[Rational], b: &[Rational]) -> Dense {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    trim(out)
}

fn div_rem(a: &[Rational], b: &[Rational]) -> (Dense, Dense) {
    let mut r = trim(a.to_vec());
    let mut q = vec![Rational::zero(); r.len().saturating_sub(b.len()) + 1];
    let lead = b.last().expect("nonzero divisor");
    while r.len() >= b.len() && !r.is_empty() {
        let shift = r.len() - b.len();
        let c = r.last().unwrap() / lead;
        q[shift] = c.clone();
        r = dense_sub_scaled(&r, b, &c, shift);
    }
    (trim(q), r)
}

/// `(s, t)` with `s·a + t·b = 1`, if `a` and `b` are coprime.
fn bezout(a: &[Rational], b: &[Rational]) -> Option<(Dense, Dense)> {
    let (mut r0, mut r1) = (trim(a.to_vec()), trim(b.to_vec()));
    let (mut s0, mut s1) = (vec![Rational::one()], Vec::new());
    let (mut t0, mut t1) = (Vec::new(), vec![Rational::one()]);
    while !r1.is_empty() {
        let (q, r) = div_rem(&r0, &r1);
        let s2 = trim(sub(&s0, &dense_mul(&q, &s1)));
        let t2 = trim(sub(&t0, &dense_mul(&q, &t1)));
        r0 = std::mem::replace(&mut r1, r);
        s0 = std::mem::replace(&mut s1, s2);
        t0 = std::mem::replace(&mut t1, t2);
    }
    // r0 is the gcd up to a unit
    if r0.len() != 1 {
        return None;
    }
    let inv = Rational::one() / &r0[0];
    Some((s0.iter().map(|c| c * &inv).collect(), t0.iter().map(|c| c * &inv).collect()))
}

fn sub(a: &[Rational], b: &[Rational]) -> Dense {
    dense_sub_scaled(a, b, &Rational::one(), 0)
}

/// Values of the glued operator on sampled inputs.
#[derive(Clone, Debug)]
pub struct GlueResult {
    pub table: Vec<(Poly, Poly)>,
    /// A finite operator reproducing the table, when the table determines one.
    pub operator: Option<WeylOp>,
}

/// Glues two chart operators over `k[x1]` on the monomials `x1^0..x1^degree`.
pub fn glue(d1: &LocalOperator, d2: &LocalOperator, degree: u32) -> Result<GlueResult, LocalizeError> {
    let inputs: Vec<Poly> = (0..=degree).map(|e| Poly::term(Rational::one(), Monomial::var_pow(x1(), e))).collect();
    glue_on(d1, d2, &inputs)
}

pub fn glue_on(d1: &LocalOperator, d2: &LocalOperator, inputs: &[Poly]) -> Result<GlueResult, LocalizeError> {
    let (f, g) = (d1.f(), d2.f());
    let (fd, gd) = (to_dense(f)?, to_dense(g)?);
    if bezout(&fd, &gd).is_none() {
        return Err(LocalizeError::NotCoprime(f.clone(), g.clone()));
    }
    let mut table = Vec::new();
    for u in inputs {
        to_dense(u)?;
        let a = d1.apply(&LocalizedPoly::embed(u.clone()));
        let b = d2.apply(&LocalizedPoly::embed(u.clone()));
        let fp = f.pow(a.k);
        let gq = g.pow(b.k);
        if &a.num * &gq != &b.num * &fp {
            return Err(LocalizeError::NotCompatible(u.clone()));
        }
        let (c, e) = bezout(&to_dense(&fp)?, &to_dense(&gq)?).expect("powers of coprime elements are coprime");
        let v = &(&from_dense(&c) * &a.num) + &(&from_dense(&e) * &b.num);
        table.push((u.clone(), v));
    }
    let operator = reconstruct(&table);
    Ok(GlueResult { table, operator })
}

/// Finite operator in `x1` agreeing with a table on `1, x1, …, x1^N`.
///
/// Adds `r_m/m! · ∂^m` for the residual `r_m` at `x1^m`, which leaves lower
/// powers untouched. Accepted when the top two residuals vanish.
fn reconstruct(table: &[(Poly, Poly)]) -> Option<WeylOp> {
    let n = table.len();
    if n < 3 {
        return None;
    }
    let mut op = WeylOp::zero();
    let mut trailing_zero = 0;
    for (m, (u, v)) in table.iter().enumerate() {
        if *u != Poly::term(Rational::one(), Monomial::var_pow(x1(), m as u32)) {
            return None;
        }
        let r = v - &op.apply(u);
        if r.is_zero() {
            trailing_zero += 1;
            continue;
        }
        trailing_zero = 0;
        let fact = Rational::from_integer(crate::ring::factorial(m as u64));
        for (mono, c) in r.terms() {
            op.add_term(mono.clone(), Monomial::var_pow(x1(), m as u32), c / &fact);
        }
    }
    (trailing_zero >= 2).then_some(op)
}

// ---------------------------------------------------------------------------
// Colocalization

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomVerdict {
    /// `Hom_R(R[f⁻¹], R) = 0`: no nonzero polynomial is infinitely divisible by `f`.
    ZeroModule,
    /// `f` is a unit, so `R[f⁻¹] = R`.
    AllOfR,
}

impl fmt::Display for HomVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HomVerdict::ZeroModule => f.write_str("Hom(R[1/f], R) = 0"),
            HomVerdict::AllOfR => f.write_str("Hom(R[1/f], R) = R"),
        }
    }
}

/// Degrees grow under division by a nonconstant `f`, so only units leave
/// nonzero infinitely divisible elements.
pub fn hom_vanishing(f: &Poly) -> Result<HomVerdict, LocalizeError> {
    match f.degree() {
        None => Err(LocalizeError::ZeroDenominator),
        Some(0) => Ok(HomVerdict::AllOfR),
        Some(_) => Ok(HomVerdict::ZeroModule),
    }
}
