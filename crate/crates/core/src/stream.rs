//! Locally finite, possibly countably infinite operator expressions.
//!
//! Every node knows how far into its index set it has to look for a given
//! input (`support_bound`), so application always terminates. Commutators
//! with single variables stay inside the catalogued shapes wherever a closed
//! form exists; other commutators become lazily evaluated families.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::ordinal::Ordinal;
use crate::ring::{falling_factorial, fmt_rational, gcd, Monomial, Poly, Variable};
use crate::weyl::WeylOp;
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("variable {0} occurs in the inner operator")]
    NotFresh(Variable),
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

// ---------------------------------------------------------------------------
// Coefficient forms

/// Coefficient of the `i`-th family term: `q(i)` or `q(i) / (i - σ)!`, with
/// `q` a rational polynomial. Terms with `i < σ` evaluate to zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoefForm {
    /// Coefficients of `q`, lowest degree first, no trailing zeros.
    poly: Vec<Rational>,
    factorial_shift: Option<i64>,
}

fn trim(mut p: Vec<Rational>) -> Vec<Rational> {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn ipoly_eval(p: &[Rational], i: i64) -> Rational {
    let x = rat(i);
    p.iter().rev().fold(Rational::zero(), |acc, c| acc * &x + c)
}

fn ipoly_mul(p: &[Rational], q: &[Rational]) -> Vec<Rational> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rational::zero(); p.len() + q.len() - 1];
    for (a, ca) in p.iter().enumerate() {
        for (b, cb) in q.iter().enumerate() {
            out[a + b] += ca * cb;
        }
    }
    trim(out)
}

fn ipoly_add(p: &[Rational], q: &[Rational]) -> Vec<Rational> {
    let n = p.len().max(q.len());
    trim((0..n).map(|k| p.get(k).cloned().unwrap_or_default() + q.get(k).cloned().unwrap_or_default()).collect())
}

/// `q(i + k)`.
fn ipoly_shift(p: &[Rational], k: i64) -> Vec<Rational> {
    let lin = vec![rat(k), Rational::one()];
    p.iter().rev().fold(Vec::new(), |acc, c| ipoly_add(&ipoly_mul(&acc, &lin), std::slice::from_ref(c)))
}

/// Divides by `(i - r)` assuming `q(r) = 0` (synthetic division).
fn ipoly_div_root(p: &[Rational], r: i64) -> Vec<Rational> {
    let n = p.len();
    let mut out = vec![Rational::zero(); n.saturating_sub(1)];
    let mut carry = Rational::zero();
    for k in (1..n).rev() {
        carry = &p[k] + carry * rat(r);
        out[k - 1] = carry.clone();
    }
    trim(out)
}

impl CoefForm {
    pub fn constant(c: Rational) -> Self {
        CoefForm { poly: trim(vec![c]), factorial_shift: None }
    }

    pub fn polynomial(coeffs: Vec<Rational>) -> Self {
        CoefForm { poly: trim(coeffs), factorial_shift: None }
    }

    /// `q(i) / (i - shift)!`.
    pub fn over_factorial(coeffs: Vec<Rational>, shift: i64) -> Self {
        CoefForm { poly: trim(coeffs), factorial_shift: Some(shift) }
    }

    pub fn zero() -> Self {
        CoefForm { poly: Vec::new(), factorial_shift: None }
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_empty()
    }

    pub fn poly(&self) -> &[Rational] {
        &self.poly
    }

    pub fn factorial_shift(&self) -> Option<i64> {
        self.factorial_shift
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match (self.poly.as_slice(), self.factorial_shift) {
            ([], _) => Some(Rational::zero()),
            ([c], None) => Some(c.clone()),
            _ => None,
        }
    }

    pub fn eval(&self, i: i64) -> Rational {
        let q = ipoly_eval(&self.poly, i);
        match self.factorial_shift {
            None => q,
            Some(s) if i < s => Rational::zero(),
            Some(s) => q / Rational::from_integer(crate::ring::factorial((i - s) as u64)),
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        CoefForm { poly: self.poly.iter().map(|a| a * c).collect(), factorial_shift: self.factorial_shift }
    }

    /// Multiplies by the affine function `a·i + b`.
    pub fn mul_affine(&self, a: i64, b: i64) -> Self {
        CoefForm { poly: ipoly_mul(&self.poly, &trim(vec![rat(b), rat(a)])), factorial_shift: self.factorial_shift }
    }

    /// The form of `i ↦ self(i + k)`.
    pub fn shift(&self, k: i64) -> Self {
        CoefForm { poly: ipoly_shift(&self.poly, k), factorial_shift: self.factorial_shift.map(|s| s - k) }
    }

    pub fn add(&self, other: &CoefForm) -> Option<CoefForm> {
        if self.is_zero() {
            return Some(other.clone());
        }
        if other.is_zero() {
            return Some(self.clone());
        }
        match (self.factorial_shift, other.factorial_shift) {
            (None, None) => Some(CoefForm::polynomial(ipoly_add(&self.poly, &other.poly))),
            (Some(s1), Some(s2)) => {
                // bring both to the smaller shift: 1/(i-s2)! = (i-s1)⋯(i-s2+1)/(i-s1)!
                let (lo, lo_p, hi, hi_p) =
                    if s1 <= s2 { (s1, &self.poly, s2, &other.poly) } else { (s2, &other.poly, s1, &self.poly) };
                let mut lifted = hi_p.clone();
                for r in lo..hi {
                    lifted = ipoly_mul(&lifted, &[rat(-r), Rational::one()]);
                }
                Some(CoefForm::over_factorial(ipoly_add(lo_p, &lifted), lo))
            }
            _ => None,
        }
    }

    /// Cancels factors `(i - σ)` against the factorial while `q(σ) = 0`;
    /// valid for indices `i ≥ start > σ`.
    fn normalized(&self, start: i64) -> Self {
        let mut out = self.clone();
        while let Some(s) = out.factorial_shift {
            if s >= start || out.poly.is_empty() || !ipoly_eval(&out.poly, s).is_zero() {
                break;
            }
            out.poly = ipoly_div_root(&out.poly, s);
            out.factorial_shift = Some(s + 1);
        }
        out
    }

    /// `Some(λ)` with `self = λ·other` as functions on the common range.
    pub fn ratio(&self, other: &CoefForm) -> Option<Rational> {
        if self.factorial_shift != other.factorial_shift || self.poly.len() != other.poly.len() || other.is_zero() {
            return None;
        }
        let lambda = self.poly.last().unwrap() / other.poly.last().unwrap();
        self.poly.iter().zip(&other.poly).all(|(a, b)| *a == b * &lambda).then_some(lambda)
    }

    fn render_poly(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (k, c) in self.poly.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mono = match k {
                0 => String::new(),
                1 => "i".to_string(),
                _ => format!("i^{k}"),
            };
            let abs = c.abs();
            let body = if mono.is_empty() {
                fmt_rational(&abs)
            } else if abs.is_one() {
                mono
            } else {
                format!("{}*{mono}", fmt_rational(&abs))
            };
            let sign = if c.is_negative() { "-" } else { "+" };
            if parts.is_empty() {
                parts.push(if c.is_negative() { format!("-{body}") } else { body });
            } else {
                parts.push(format!("{sign} {body}"));
            }
        }
        if parts.is_empty() { "0".to_string() } else { parts.join(" ") }
    }

    /// Factors as they appear in a family body, `None` for the constant 1.
    fn render_factors(&self) -> Option<String> {
        let mut out = Vec::new();
        if self.as_constant() != Some(Rational::one()) && !(self.poly.len() == 1 && self.poly[0].is_one()) {
            out.push(format!("({})", self.render_poly()));
        }
        if let Some(s) = self.factorial_shift {
            out.push(format!("(1/fact({}))", render_affine("i", 1, -s)));
        }
        (!out.is_empty()).then(|| out.join("*"))
    }
}

fn render_affine(var: &str, a: i64, b: i64) -> String {
    let head = match a {
        0 => return b.to_string(),
        1 => var.to_string(),
        -1 => format!("-{var}"),
        _ => format!("{a}*{var}"),
    };
    match b.signum() {
        0 => head,
        1 => format!("{head}+{b}"),
        _ => format!("{head}-{}", -b),
    }
}

// ---------------------------------------------------------------------------
// Families

/// Derivative pattern of the `i`-th family term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DerivPattern {
    /// `∂^{a·i+b} / ∂x_{s+t·i}^{a·i+b}` with `t ≥ 1`.
    SingleVar { s: i64, t: i64, a: i64, b: i64 },
    /// `∂^{a·i+b} / ∂v^{a·i+b}` for a fixed variable.
    FixedVar { v: Variable, a: i64, b: i64 },
    /// `Π ∂/∂x_j` over `1 ≤ j ≤ i`, `j ∉ skip`.
    Prefix { skip: BTreeSet<u64> },
}

/// `Σ_{i ≥ start} coef(i) · factor · pattern(i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FamilyTermSpec {
    pub coef: CoefForm,
    pub pattern: DerivPattern,
    pub factor: Monomial,
    pub start: i64,
}

impl FamilyTermSpec {
    pub fn new(coef: CoefForm, pattern: DerivPattern, factor: Monomial, start: i64) -> Result<Self, StreamError> {
        let fam = FamilyTermSpec { coef, pattern, factor, start };
        fam.validate()?;
        Ok(fam)
    }

    fn validate(&self) -> Result<(), StreamError> {
        let bad = |m: &str| Err(StreamError::UnsupportedFamily(m.to_string()));
        match self.pattern {
            DerivPattern::SingleVar { s, t, a, b } => {
                if t < 1 {
                    return bad("the variable index must grow with i");
                }
                if a < 0 || a * self.start + b < 1 {
                    return bad("derivative orders must be at least 1 on the whole range");
                }
                let first = s + t * self.start;
                if first < 1 {
                    return bad("family variables must be x_i or y_i with index ≥ 1");
                }
            }
            DerivPattern::FixedVar { a, b, .. } => {
                if a < 0 {
                    return bad("derivative orders must not decrease");
                }
                if a == 0 && !self.coef.is_zero() {
                    return bad("a constant derivative order repeated infinitely often is not locally finite");
                }
                if a * self.start + b < 0 && !self.coef.eval(self.start).is_zero() {
                    return bad("negative derivative order");
                }
            }
            DerivPattern::Prefix { .. } => {
                if self.start < 0 {
                    return bad("prefix families start at i ≥ 0");
                }
            }
        }
        Ok(())
    }

    /// `Σ_{i≥1} ∂²/∂x_i²`.
    pub fn laplace() -> Self {
        Self::single_var(1, 0, 1, 0, 2)
    }

    /// `Σ_{i≥1} ∂^i/∂x_i^i`.
    pub fn d_omega() -> Self {
        Self::single_var(1, 0, 1, 1, 0)
    }

    /// `∂/∂x_1 + ∂²/∂x_1∂x_2 + ⋯`.
    pub fn d_infinity() -> Self {
        FamilyTermSpec {
            coef: CoefForm::constant(Rational::one()),
            pattern: DerivPattern::Prefix { skip: BTreeSet::new() },
            factor: Monomial::one(),
            start: 1,
        }
    }

    /// `Σ_{i≥0} (1/i!) d^i/dx_1^i`.
    pub fn shift() -> Self {
        Self::shift_in(Variable::x(1))
    }

    pub fn shift_in(v: Variable) -> Self {
        FamilyTermSpec {
            coef: CoefForm::over_factorial(vec![Rational::one()], 0),
            pattern: DerivPattern::FixedVar { v, a: 1, b: 0 },
            factor: Monomial::one(),
            start: 0,
        }
    }

    /// `Σ_{i ≥ start} ∂^{a i + b} / ∂x_{s + t i}` with unit coefficients.
    pub fn single_var(start: i64, s: i64, t: i64, a: i64, b: i64) -> Self {
        FamilyTermSpec::new(
            CoefForm::constant(Rational::one()),
            DerivPattern::SingleVar { s, t, a, b },
            Monomial::one(),
            start,
        )
        .expect("catalogue family")
    }

    pub fn var_at(&self, i: i64) -> Option<Variable> {
        match self.pattern {
            DerivPattern::SingleVar { s, t, .. } => Some(Variable(s.checked_add(t * i)? as u64)),
            DerivPattern::FixedVar { v, .. } => Some(v),
            DerivPattern::Prefix { .. } => None,
        }
    }

    pub fn exp_at(&self, i: i64) -> i64 {
        match self.pattern {
            DerivPattern::SingleVar { a, b, .. } | DerivPattern::FixedVar { a, b, .. } => a * i + b,
            DerivPattern::Prefix { ref skip } => (1..=i.max(0) as u64).filter(|j| !skip.contains(j)).count() as i64,
        }
    }

    /// Family index owning `v` for single-variable families.
    fn index_of(&self, v: Variable) -> Option<i64> {
        let DerivPattern::SingleVar { s, t, .. } = self.pattern else { return None };
        if v.is_y() != in_y(s, t, self.start) {
            return None;
        }
        let d = v.0 as i64 - s;
        (d % t == 0 && d / t >= self.start).then_some(d / t)
    }

    /// Derivative multi-index of the `i`-th term.
    pub fn deriv_at(&self, i: i64) -> Monomial {
        match &self.pattern {
            DerivPattern::SingleVar { .. } | DerivPattern::FixedVar { .. } => {
                let e = self.exp_at(i);
                Monomial::var_pow(self.var_at(i).unwrap(), e.max(0) as u32)
            }
            DerivPattern::Prefix { skip } => {
                Monomial::from_pairs((1..=i.max(0) as u64).filter(|j| !skip.contains(j)).map(|j| (Variable::x(j), 1)))
            }
        }
    }

    /// The `i`-th term as a finite operator.
    pub fn term(&self, i: i64) -> WeylOp {
        let c = self.coef.eval(i);
        if c.is_zero() || i < self.start {
            return WeylOp::zero();
        }
        WeylOp::term(c, self.factor.clone(), self.deriv_at(i))
    }

    /// Indices `< bound` (see [`OpExpr::support_bound`]) that may act
    /// nontrivially on polynomials in `vars` of degree `≤ deg`.
    fn relevant_indices(&self, vars: &BTreeSet<Variable>, deg: u32) -> Vec<i64> {
        match self.pattern {
            DerivPattern::SingleVar { .. } => {
                let mut idx: Vec<i64> = vars.iter().filter_map(|&v| self.index_of(v)).collect();
                idx.sort_unstable();
                idx
            }
            _ => (self.start..self.bound(vars, deg)).collect(),
        }
    }

    /// Every index `i ≥ bound` annihilates polynomials in `vars` of degree `≤ deg`.
    pub fn bound(&self, vars: &BTreeSet<Variable>, deg: u32) -> i64 {
        if self.coef.is_zero() {
            return self.start;
        }
        let n = match &self.pattern {
            DerivPattern::SingleVar { .. } => vars.iter().filter_map(|&v| self.index_of(v)).max().map_or(0, |i| i + 1),
            DerivPattern::FixedVar { v, a, b } => {
                // smallest i with a·i + b > deg (or ≥ 1 when v is absent)
                let need = if vars.contains(v) { deg as i64 + 1 } else { 1 };
                let (a, b) = (*a, *b);
                if a == 0 {
                    self.start
                } else {
                    (need - b + a - 1).div_euclid(a)
                }
            }
            DerivPattern::Prefix { skip } => {
                let mut j = 1u64;
                while skip.contains(&j) || vars.contains(&Variable::x(j)) {
                    j += 1;
                }
                j as i64
            }
        };
        n.max(self.start)
    }

    /// Applies the terms with the given indices.
    fn apply_indices(&self, f: &Poly, indices: impl IntoIterator<Item = i64>) -> Poly {
        let mut out = Poly::zero();
        for i in indices {
            if i < self.start {
                continue;
            }
            let c = self.coef.eval(i);
            if c.is_zero() {
                continue;
            }
            let g = f.derive_multi(&self.deriv_at(i));
            if !g.is_zero() {
                out = &out + &g.mul_monomial(&self.factor).scale(&c);
            }
        }
        out
    }

    /// Strips vanishing leading terms and cancels factorial factors.
    pub fn canonical(&self) -> FamilyTermSpec {
        let mut fam = self.clone();
        if fam.coef.is_zero() {
            return fam;
        }
        if let Some(s) = fam.coef.factorial_shift {
            fam.start = fam.start.max(s);
        }
        let mut guard = fam.coef.poly.len() + 1;
        while fam.coef.eval(fam.start).is_zero() && guard > 0 {
            fam.start += 1;
            guard -= 1;
        }
        fam.coef = fam.coef.normalized(fam.start);
        fam
    }

    /// Canonical form reindexed to start at 0 (prefix families keep their
    /// index, which counts derivatives).
    fn reindexed(&self) -> FamilyTermSpec {
        let fam = self.canonical();
        let k = fam.start;
        match fam.pattern {
            DerivPattern::SingleVar { s, t, a, b } => FamilyTermSpec {
                coef: fam.coef.shift(k),
                pattern: DerivPattern::SingleVar { s: s + t * k, t, a, b: b + a * k },
                factor: fam.factor,
                start: 0,
            },
            DerivPattern::FixedVar { v, a, b } => FamilyTermSpec {
                coef: fam.coef.shift(k),
                pattern: DerivPattern::FixedVar { v, a, b: b + a * k },
                factor: fam.factor,
                start: 0,
            },
            DerivPattern::Prefix { .. } => fam,
        }
    }

    /// `Some(λ)` with `self = λ·other` as operators.
    pub fn ratio(&self, other: &FamilyTermSpec) -> Option<Rational> {
        let (a, b) = (self.reindexed(), other.reindexed());
        if a.pattern != b.pattern || a.factor != b.factor || a.start != b.start {
            return None;
        }
        a.coef.ratio(&b.coef)
    }

    /// `θ_{x_w}` in closed form.
    fn theta_var(&self, w: Variable) -> OpExpr {
        match &self.pattern {
            DerivPattern::SingleVar { .. } => match self.index_of(w) {
                Some(i) => {
                    let e = self.exp_at(i);
                    let c = self.coef.eval(i) * rat(-e);
                    OpExpr::Finite(WeylOp::term(c, self.factor.clone(), Monomial::var_pow(w, (e - 1) as u32)))
                }
                None => OpExpr::zero(),
            },
            DerivPattern::FixedVar { v, a, b } => {
                if *v != w {
                    return OpExpr::zero();
                }
                let fam = FamilyTermSpec {
                    coef: self.coef.mul_affine(-a, -b),
                    pattern: DerivPattern::FixedVar { v: *v, a: *a, b: b - 1 },
                    factor: self.factor.clone(),
                    start: self.start,
                };
                OpExpr::family(fam.canonical())
            }
            DerivPattern::Prefix { skip } => {
                if w.is_y() || skip.contains(&w.0) {
                    return OpExpr::zero();
                }
                let mut skip = skip.clone();
                skip.insert(w.0);
                OpExpr::family(FamilyTermSpec {
                    coef: self.coef.scale(&-Rational::one()),
                    pattern: DerivPattern::Prefix { skip },
                    factor: self.factor.clone(),
                    start: self.start.max(w.0 as i64),
                })
            }
        }
    }

    /// First `count` indices with nonzero coefficient.
    fn nonzero_indices(&self, count: usize) -> Vec<i64> {
        let fam = self.canonical();
        if fam.coef.is_zero() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut i = fam.start;
        let mut misses = 0;
        while out.len() < count && misses <= fam.coef.poly.len() + 1 {
            if fam.coef.eval(i).is_zero() {
                misses += 1;
            } else {
                out.push(i);
            }
            i += 1;
        }
        out
    }

    pub fn support(&self) -> VarSupport {
        let base = match &self.pattern {
            DerivPattern::SingleVar { s, t, .. } => VarSupport::Progression { s: *s, t: *t, from: self.start },
            DerivPattern::FixedVar { v, .. } => VarSupport::Finite([*v].into()),
            DerivPattern::Prefix { .. } => VarSupport::From(1),
        };
        if self.factor.is_one() {
            base
        } else {
            VarSupport::Union(vec![base, VarSupport::Finite(self.factor.vars().collect())])
        }
    }

    fn probes(&self, budget: usize) -> Vec<Variable> {
        let mut out: Vec<Variable> = match &self.pattern {
            DerivPattern::SingleVar { .. } => {
                self.nonzero_indices(budget).into_iter().filter_map(|i| self.var_at(i)).collect()
            }
            DerivPattern::FixedVar { v, .. } => vec![*v],
            DerivPattern::Prefix { skip } => {
                (1u64..).filter(|j| !skip.contains(j)).take(budget).map(Variable::x).collect()
            }
        };
        out.extend(self.factor.vars());
        out
    }
}

impl fmt::Display for FamilyTermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coef = self.coef.render_factors();
        match &self.pattern {
            DerivPattern::Prefix { skip } => {
                write!(f, "prefixfamily(i>={}", self.start)?;
                if !skip.is_empty() {
                    let s: Vec<String> = skip.iter().map(u64::to_string).collect();
                    write!(f, ", skip({})", s.join(","))?;
                }
                let mut body: Vec<String> = coef.into_iter().collect();
                if !self.factor.is_one() {
                    body.push(self.factor.to_string());
                }
                if !body.is_empty() {
                    write!(f, ", {}", body.join("*"))?;
                }
                f.write_str(")")
            }
            _ => {
                let mut body: Vec<String> = coef.into_iter().collect();
                if !self.factor.is_one() {
                    body.push(self.factor.to_string());
                }
                let (var, a, b) = match self.pattern {
                    DerivPattern::SingleVar { s, t, a, b } => {
                        let y = Variable::Y_BASE as i64;
                        let v = if s + t * self.start >= y {
                            format!("y[{}]", render_affine("i", t, s - y))
                        } else {
                            format!("x[{}]", render_affine("i", t, s))
                        };
                        (v, a, b)
                    }
                    DerivPattern::FixedVar { v, a, b } => (v.to_string(), a, b),
                    DerivPattern::Prefix { .. } => unreachable!(),
                };
                let exp = render_affine("i", a, b);
                let d = if exp == "1" {
                    format!("d({var})")
                } else if a == 0 || (b == 0 && a == 1) {
                    format!("d({var})^{exp}")
                } else {
                    format!("d({var})^({exp})")
                };
                body.push(d);
                write!(f, "family(i>={}, {})", self.start, body.join("*"))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Variable blocks

/// Injective encoding of tree addresses (finite sequences of naturals) into
/// `x`-variable indices, with a computable inverse.
///
/// The address is written as a leading `1` bit followed by the Elias-gamma
/// code of `e + 1` for each entry `e`.
#[derive(Clone, Copy, Debug, Default)]
pub struct VariableAllocator;

impl VariableAllocator {
    pub const MAX_BITS: u32 = 62;

    pub fn encode(path: &[u64]) -> Option<Variable> {
        let mut acc: u64 = 1;
        let mut bits: u32 = 1;
        for &e in path {
            let m = e.checked_add(1)?;
            let len = 64 - m.leading_zeros();
            bits += 2 * len - 1;
            if bits > Self::MAX_BITS {
                return None;
            }
            acc = (acc << (2 * len - 1)) | m;
        }
        Some(Variable(acc))
    }

    pub fn decode(v: Variable) -> Option<Vec<u64>> {
        let x = v.0;
        if x == 0 || x >= (1u64 << Self::MAX_BITS) {
            return None;
        }
        let total = 64 - x.leading_zeros();
        let mut pos = total - 1; // bits remaining after the sentinel
        let bit = |p: u32| (x >> (p - 1)) & 1;
        let mut path = Vec::new();
        while pos > 0 {
            let mut zeros = 0;
            while pos > 0 && bit(pos) == 0 {
                zeros += 1;
                pos -= 1;
            }
            if pos < zeros + 1 {
                return None;
            }
            let m = (x >> (pos - zeros - 1)) & ((1u64 << (zeros + 1)) - 1);
            pos -= zeros + 1;
            path.push(m - 1);
        }
        Some(path)
    }
}

/// A progression stays inside the namespace of its first variable.
fn in_y(s: i64, t: i64, from: i64) -> bool {
    s + t * from >= Variable::Y_BASE as i64
}

/// Conservative description of the variables an operator involves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarSupport {
    Finite(BTreeSet<Variable>),
    /// `x_{s+t·i}` for `i ≥ from`.
    Progression { s: i64, t: i64, from: i64 },
    /// All `x_i` with `i ≥ k`.
    From(u64),
    /// Allocator addresses extending a path.
    Block(Vec<u64>),
    Union(Vec<VarSupport>),
}

impl VarSupport {
    pub fn empty() -> Self {
        VarSupport::Finite(BTreeSet::new())
    }

    pub fn contains(&self, v: Variable) -> bool {
        match self {
            VarSupport::Finite(s) => s.contains(&v),
            VarSupport::Progression { s, t, from } => {
                if v.is_y() != in_y(*s, *t, *from) {
                    return false;
                }
                let d = v.0 as i64 - s;
                d % t == 0 && d / t >= *from
            }
            VarSupport::From(k) => !v.is_y() && v.0 >= *k,
            VarSupport::Block(p) => VariableAllocator::decode(v).is_some_and(|q| q.starts_with(p)),
            VarSupport::Union(parts) => parts.iter().any(|p| p.contains(v)),
        }
    }

    /// `true` only when the two supports are certainly disjoint.
    pub fn disjoint(&self, other: &VarSupport) -> bool {
        use VarSupport::*;
        match (self, other) {
            (Union(ps), o) | (o, Union(ps)) => ps.iter().all(|p| p.disjoint(o)),
            (Finite(s), o) | (o, Finite(s)) => s.iter().all(|&v| !o.contains(v)),
            (Progression { s: s1, t: t1, from: f1 }, Progression { s: s2, t: t2, from: f2 }) => {
                if in_y(*s1, *t1, *f1) != in_y(*s2, *t2, *f2) {
                    return true;
                }
                // both progressions are unbounded, so they meet iff the
                // congruence s1 + t1 i = s2 + t2 j is solvable
                (s2 - s1).rem_euclid(gcd(*t1 as u64, *t2 as u64) as i64) != 0
            }
            (Progression { s, t, from }, From(_)) | (From(_), Progression { s, t, from }) => in_y(*s, *t, *from),
            (Block(p), Block(q)) => !p.starts_with(q) && !q.starts_with(p),
            (Block(_), Progression { s, t, from }) | (Progression { s, t, from }, Block(_)) => in_y(*s, *t, *from),
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Limit families

/// Generator of a countable sum of operators living on pairwise disjoint
/// variable blocks.
pub trait BranchGenerator: Send + Sync + fmt::Debug {
    /// The `n`-th summand, `n ≥ 1`.
    fn branch(&self, n: u64) -> OpExpr;
    /// Ordinal order of the `n`-th summand.
    fn declared_order(&self, n: u64) -> Ordinal;
    /// Supremum of the declared orders (a limit ordinal exceeded by no branch).
    fn supremum(&self) -> Ordinal;
    /// Branch whose block contains `v`.
    fn branch_of(&self, v: Variable) -> Option<u64>;
    fn support(&self) -> VarSupport;
    fn describe(&self) -> String;
}

#[derive(Debug)]
pub struct LimitFamily {
    generator: Arc<dyn BranchGenerator>,
    cache: Mutex<BTreeMap<u64, Arc<OpExpr>>>,
}

impl LimitFamily {
    pub fn new(generator: Arc<dyn BranchGenerator>) -> Self {
        LimitFamily { generator, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn generator(&self) -> &dyn BranchGenerator {
        self.generator.as_ref()
    }

    /// Memoized branch. Concurrent fills compute identical values.
    pub fn branch(&self, n: u64) -> Arc<OpExpr> {
        if let Some(b) = self.cache.lock().unwrap().get(&n) {
            return b.clone();
        }
        let b = Arc::new(self.generator.branch(n));
        self.cache.lock().unwrap().entry(n).or_insert(b).clone()
    }

    pub fn materialized(&self) -> Vec<u64> {
        self.cache.lock().unwrap().keys().copied().collect()
    }

    fn branches_for(&self, vars: &BTreeSet<Variable>) -> BTreeSet<u64> {
        vars.iter().filter_map(|&v| self.generator.branch_of(v)).collect()
    }
}

/// Commutators of a family with non-variable ring elements, evaluated term by
/// term and memoized.
#[derive(Debug)]
pub struct LazyFamily {
    base: FamilyTermSpec,
    chain: Vec<Poly>,
    cache: Mutex<BTreeMap<i64, WeylOp>>,
}

impl LazyFamily {
    pub fn new(base: FamilyTermSpec, chain: Vec<Poly>) -> Self {
        LazyFamily { base, chain, cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn base(&self) -> &FamilyTermSpec {
        &self.base
    }

    pub fn chain(&self) -> &[Poly] {
        &self.chain
    }

    /// `θ_{r_k} ⋯ θ_{r_1}(base term i)`.
    pub fn term(&self, i: i64) -> WeylOp {
        if let Some(t) = self.cache.lock().unwrap().get(&i) {
            return t.clone();
        }
        let t = self.chain.iter().fold(self.base.term(i), |acc, r| acc.theta(r));
        self.cache.lock().unwrap().entry(i).or_insert(t).clone()
    }

    fn widened(&self, vars: &BTreeSet<Variable>, deg: u32) -> (BTreeSet<Variable>, u32) {
        let mut v = vars.clone();
        let mut d = deg;
        for r in &self.chain {
            v.extend(r.vars());
            d += r.degree().unwrap_or(0);
        }
        (v, d)
    }
}

// ---------------------------------------------------------------------------
// Expressions

#[derive(Clone, Debug)]
pub enum OpExpr {
    Finite(WeylOp),
    Scale(Rational, Arc<OpExpr>),
    Sum(Vec<OpExpr>),
    Compose(Arc<OpExpr>, Arc<OpExpr>),
    /// `inner ∘ ∂^n/∂v^n` with `v` not involved in `inner`.
    TensorDer { inner: Arc<OpExpr>, var: Variable, n: u32 },
    Family(FamilyTermSpec),
    Limit(Arc<LimitFamily>),
    Lazy(Arc<LazyFamily>),
    /// `r∘inner − inner∘r`, evaluated on demand.
    Commutator { r: Poly, inner: Arc<OpExpr> },
}

/// Outcome of [`OpExpr::zero_test`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ZeroVerdict {
    /// Certified zero, with the certificate.
    Zero(String),
    /// A polynomial the operator does not annihilate.
    NonZero(Poly),
    Unknown(usize),
}

impl ZeroVerdict {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroVerdict::Zero(_))
    }

    pub fn is_nonzero(&self) -> bool {
        matches!(self, ZeroVerdict::NonZero(_))
    }
}

impl OpExpr {
    pub fn zero() -> Self {
        OpExpr::Finite(WeylOp::zero())
    }

    pub fn identity() -> Self {
        OpExpr::Finite(WeylOp::identity())
    }

    pub fn finite(op: WeylOp) -> Self {
        OpExpr::Finite(op)
    }

    pub fn family(fam: FamilyTermSpec) -> Self {
        if fam.coef.is_zero() {
            return OpExpr::zero();
        }
        OpExpr::Family(fam)
    }

    pub fn limit(generator: Arc<dyn BranchGenerator>) -> Self {
        OpExpr::Limit(Arc::new(LimitFamily::new(generator)))
    }

    pub fn as_finite(&self) -> Option<&WeylOp> {
        match self {
            OpExpr::Finite(op) => Some(op),
            _ => None,
        }
    }

    pub fn scale(c: Rational, inner: OpExpr) -> OpExpr {
        if c.is_zero() {
            return OpExpr::zero();
        }
        if c.is_one() {
            return inner;
        }
        match inner {
            OpExpr::Finite(op) => OpExpr::Finite(op.scale(&c)),
            OpExpr::Family(mut fam) => {
                fam.coef = fam.coef.scale(&c);
                OpExpr::Family(fam)
            }
            OpExpr::Scale(c2, inner) => OpExpr::scale(c * c2, (*inner).clone()),
            OpExpr::Sum(parts) => OpExpr::sum(parts.into_iter().map(|p| OpExpr::scale(c.clone(), p)).collect()),
            other => OpExpr::Scale(c, Arc::new(other)),
        }
    }

    /// Flattening sum: merges finite parts and like families, drops zeros.
    pub fn sum(parts: Vec<OpExpr>) -> OpExpr {
        let mut finite = WeylOp::zero();
        let mut families: Vec<FamilyTermSpec> = Vec::new();
        let mut rest: Vec<OpExpr> = Vec::new();
        let mut stack: Vec<OpExpr> = parts.into_iter().rev().collect();
        while let Some(p) = stack.pop() {
            match p {
                OpExpr::Sum(inner) => stack.extend(inner.into_iter().rev()),
                OpExpr::Finite(op) => finite = &finite + &op,
                OpExpr::Family(fam) => {
                    let slot = families.iter_mut().find(|g| {
                        g.pattern == fam.pattern && g.factor == fam.factor && g.start == fam.start
                    });
                    match slot.and_then(|g| g.coef.add(&fam.coef).map(|c| (g, c))) {
                        Some((g, c)) => g.coef = c,
                        None => families.push(fam),
                    }
                }
                other => rest.push(other),
            }
        }
        let mut out: Vec<OpExpr> = Vec::new();
        if !finite.is_zero() {
            out.push(OpExpr::Finite(finite));
        }
        out.extend(families.into_iter().filter(|f| !f.coef.is_zero()).map(OpExpr::Family));
        out.extend(rest.into_iter().filter(|p| !p.is_structurally_zero()));
        match out.len() {
            0 => OpExpr::zero(),
            1 => out.pop().unwrap(),
            _ => OpExpr::Sum(out),
        }
    }

    pub fn add(&self, other: &OpExpr) -> OpExpr {
        OpExpr::sum(vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &OpExpr) -> OpExpr {
        OpExpr::sum(vec![self.clone(), OpExpr::scale(-Rational::one(), other.clone())])
    }

    /// `left ∘ right`, collapsing finite products and recognising a fresh
    /// derivative on the right as a tensor factor.
    pub fn compose(left: OpExpr, right: OpExpr) -> OpExpr {
        if left.is_structurally_zero() || right.is_structurally_zero() {
            return OpExpr::zero();
        }
        match (&left, &right) {
            (OpExpr::Finite(a), OpExpr::Finite(b)) => return OpExpr::Finite(a.compose(b)),
            (OpExpr::Finite(a), _) if a.as_scalar().is_some() => return OpExpr::scale(a.as_scalar().unwrap(), right),
            (_, OpExpr::Finite(b)) if b.as_scalar().is_some() => return OpExpr::scale(b.as_scalar().unwrap(), left),
            (_, OpExpr::Finite(b)) => {
                if let Some((v, n)) = pure_power_derivative(b) {
                    if !left.support().contains(v) && left.support().disjoint(&VarSupport::Finite([v].into())) {
                        return OpExpr::TensorDer { inner: Arc::new(left), var: v, n };
                    }
                }
            }
            _ => {}
        }
        OpExpr::Compose(Arc::new(left), Arc::new(right))
    }

    /// `inner ∘ ∂^n/∂v^n` for `v` not involved in `inner`.
    pub fn tensor_der(inner: OpExpr, v: Variable, n: u32) -> Result<OpExpr, StreamError> {
        if !inner.support().disjoint(&VarSupport::Finite([v].into())) {
            return Err(StreamError::NotFresh(v));
        }
        Ok(match (n, inner) {
            (0, inner) => inner,
            (_, OpExpr::Finite(op)) => OpExpr::Finite(op.compose(&WeylOp::derivative(v, n))),
            (_, inner) if inner.is_structurally_zero() => OpExpr::zero(),
            (_, inner) => OpExpr::TensorDer { inner: Arc::new(inner), var: v, n },
        })
    }

    /// Zero by construction (no search).
    pub fn is_structurally_zero(&self) -> bool {
        self.zero_certificate().is_some()
    }

    fn zero_certificate(&self) -> Option<String> {
        match self {
            OpExpr::Finite(op) => op.is_zero().then(|| "finite operator with no terms".to_string()),
            OpExpr::Scale(c, inner) => {
                if c.is_zero() {
                    Some("scaled by 0".into())
                } else {
                    inner.zero_certificate()
                }
            }
            OpExpr::Sum(parts) => {
                let certs: Option<Vec<String>> = parts.iter().map(OpExpr::zero_certificate).collect();
                certs.map(|c| format!("sum of zeros [{}]", c.join("; ")))
            }
            OpExpr::Compose(l, r) => l.zero_certificate().or_else(|| r.zero_certificate()),
            OpExpr::TensorDer { inner, .. } => inner.zero_certificate(),
            OpExpr::Family(fam) => fam.coef.is_zero().then(|| "family with identically zero coefficients".into()),
            OpExpr::Limit(_) => None,
            OpExpr::Lazy(l) => l.base.coef.is_zero().then(|| "transform of a zero family".into()),
            OpExpr::Commutator { r, inner } => {
                if r.as_constant().is_some() {
                    Some("commutator with a constant".into())
                } else {
                    inner.zero_certificate()
                }
            }
        }
    }

    /// Conservative variable support.
    pub fn support(&self) -> VarSupport {
        match self {
            OpExpr::Finite(op) => VarSupport::Finite(op.vars()),
            OpExpr::Scale(_, inner) => inner.support(),
            OpExpr::Sum(parts) => VarSupport::Union(parts.iter().map(OpExpr::support).collect()),
            OpExpr::Compose(l, r) => VarSupport::Union(vec![l.support(), r.support()]),
            OpExpr::TensorDer { inner, var, .. } => {
                VarSupport::Union(vec![inner.support(), VarSupport::Finite([*var].into())])
            }
            OpExpr::Family(fam) => fam.support(),
            OpExpr::Limit(l) => l.generator.support(),
            OpExpr::Lazy(l) => VarSupport::Union(
                std::iter::once(l.base.support())
                    .chain(l.chain.iter().map(|r| VarSupport::Finite(r.vars())))
                    .collect(),
            ),
            OpExpr::Commutator { r, inner } => {
                VarSupport::Union(vec![inner.support(), VarSupport::Finite(r.vars())])
            }
        }
    }

    /// Variables and degree bound of `self(f)` for `f` in `vars` of degree `≤ deg`.
    pub fn envelope(&self, vars: &BTreeSet<Variable>, deg: u32) -> (BTreeSet<Variable>, u32) {
        match self {
            OpExpr::Finite(op) => {
                let mut v = vars.clone();
                v.extend(op.terms().flat_map(|(x, _, _)| x.vars()));
                (v, deg + op.coefficient_degree())
            }
            OpExpr::Scale(_, inner) | OpExpr::TensorDer { inner, .. } => inner.envelope(vars, deg),
            OpExpr::Sum(parts) => parts.iter().fold((vars.clone(), deg), |(v, d), p| {
                let (pv, pd) = p.envelope(vars, deg);
                (v.union(&pv).copied().collect(), d.max(pd))
            }),
            OpExpr::Compose(l, r) => {
                let (v, d) = r.envelope(vars, deg);
                l.envelope(&v, d)
            }
            OpExpr::Family(fam) => {
                let mut v = vars.clone();
                v.extend(fam.factor.vars());
                (v, deg + fam.factor.degree())
            }
            // branches are built from derivatives only
            OpExpr::Limit(_) => (vars.clone(), deg),
            OpExpr::Lazy(l) => {
                let (mut v, d) = l.widened(vars, deg);
                v.extend(l.base.factor.vars());
                (v, d + l.base.factor.degree())
            }
            OpExpr::Commutator { r, inner } => {
                let mut wide = vars.clone();
                wide.extend(r.vars());
                inner.envelope(&wide, deg + r.degree().unwrap_or(0))
            }
        }
    }

    /// `N` such that every family index `i ≥ N` annihilates every polynomial
    /// in `vars` of total degree `≤ deg`. Composite nodes report the largest
    /// bound among their children, evaluated on the inputs they receive.
    pub fn support_bound(&self, vars: &BTreeSet<Variable>, deg: u32) -> u64 {
        match self {
            OpExpr::Finite(_) => 0,
            OpExpr::Scale(_, inner) => inner.support_bound(vars, deg),
            OpExpr::Sum(parts) => parts.iter().map(|p| p.support_bound(vars, deg)).max().unwrap_or(0),
            OpExpr::Compose(l, r) => {
                let (v, d) = r.envelope(vars, deg);
                r.support_bound(vars, deg).max(l.support_bound(&v, d))
            }
            OpExpr::TensorDer { inner, .. } => inner.support_bound(vars, deg),
            OpExpr::Family(fam) => fam.bound(vars, deg).max(0) as u64,
            OpExpr::Limit(l) => l.branches_for(vars).into_iter().max().map_or(0, |n| n + 1),
            OpExpr::Lazy(l) => {
                let (v, d) = l.widened(vars, deg);
                l.base.bound(&v, d).max(0) as u64
            }
            OpExpr::Commutator { r, inner } => {
                let mut wide = vars.clone();
                wide.extend(r.vars());
                inner.support_bound(&wide, deg + r.degree().unwrap_or(0))
            }
        }
    }

    pub fn apply(&self, f: &Poly) -> Poly {
        self.apply_with(f, None)
    }

    /// Applies with every family truncated at the explicit index `cutoff`
    /// instead of its own bound. Agrees with [`OpExpr::apply`] whenever
    /// `cutoff` is at least the support bound.
    pub fn apply_truncated(&self, f: &Poly, cutoff: u64) -> Poly {
        self.apply_with(f, Some(cutoff))
    }

    fn apply_with(&self, f: &Poly, cutoff: Option<u64>) -> Poly {
        if f.is_zero() {
            return Poly::zero();
        }
        match self {
            OpExpr::Finite(op) => op.apply(f),
            OpExpr::Scale(c, inner) => inner.apply_with(f, cutoff).scale(c),
            OpExpr::Sum(parts) => parts.iter().fold(Poly::zero(), |acc, p| &acc + &p.apply_with(f, cutoff)),
            OpExpr::Compose(l, r) => l.apply_with(&r.apply_with(f, cutoff), cutoff),
            OpExpr::TensorDer { inner, var, n } => inner.apply_with(&f.partial_derive(*var, *n), cutoff),
            OpExpr::Family(fam) => {
                let (vars, deg) = (f.vars(), f.degree().unwrap_or(0));
                match cutoff {
                    Some(c) => fam.apply_indices(f, fam.start..c as i64),
                    None => fam.apply_indices(f, fam.relevant_indices(&vars, deg)),
                }
            }
            OpExpr::Limit(l) => {
                let branches: Vec<u64> = match cutoff {
                    Some(c) => (1..c).collect(),
                    None => l.branches_for(&f.vars()).into_iter().collect(),
                };
                branches.into_iter().fold(Poly::zero(), |acc, n| &acc + &l.branch(n).apply_with(f, cutoff))
            }
            OpExpr::Lazy(l) => {
                let (vars, deg) = l.widened(&f.vars(), f.degree().unwrap_or(0));
                let indices: Vec<i64> = match cutoff {
                    Some(c) => (l.base.start..c as i64).collect(),
                    None => l.base.relevant_indices(&vars, deg),
                };
                indices.into_iter().fold(Poly::zero(), |acc, i| &acc + &l.term(i).apply(f))
            }
            OpExpr::Commutator { r, inner } => {
                let a = r * &inner.apply_with(f, cutoff);
                let b = inner.apply_with(&(r * f), cutoff);
                &a - &b
            }
        }
    }

    /// `θ_r(D) = r∘D − D∘r`.
    pub fn theta(&self, r: &Poly) -> OpExpr {
        if r.as_constant().is_some() {
            return OpExpr::zero();
        }
        if r.degree() == Some(1) {
            // θ is linear in r and constants commute
            let parts = r
                .terms()
                .filter(|(m, _)| !m.is_one())
                .map(|(m, c)| OpExpr::scale(c.clone(), self.theta_var(m.vars().next().unwrap())))
                .collect();
            return OpExpr::sum(parts);
        }
        match self {
            OpExpr::Finite(op) => OpExpr::Finite(op.theta(r)),
            OpExpr::Scale(c, inner) => OpExpr::scale(c.clone(), inner.theta(r)),
            OpExpr::Sum(parts) => OpExpr::sum(parts.iter().map(|p| p.theta(r)).collect()),
            OpExpr::Compose(a, b) => OpExpr::sum(vec![
                OpExpr::compose(a.theta(r), (**b).clone()),
                OpExpr::compose((**a).clone(), b.theta(r)),
            ]),
            OpExpr::TensorDer { inner, var, n } => {
                let d = WeylOp::derivative(*var, *n);
                OpExpr::sum(vec![
                    OpExpr::compose(inner.theta(r), OpExpr::Finite(d.clone())),
                    OpExpr::compose((**inner).clone(), OpExpr::Finite(d.theta(r))),
                ])
            }
            OpExpr::Family(fam) => OpExpr::Lazy(Arc::new(LazyFamily::new(fam.clone(), vec![r.clone()]))),
            OpExpr::Lazy(l) => {
                let mut chain = l.chain.clone();
                chain.push(r.clone());
                OpExpr::Lazy(Arc::new(LazyFamily::new(l.base.clone(), chain)))
            }
            OpExpr::Limit(_) | OpExpr::Commutator { .. } => {
                OpExpr::Commutator { r: r.clone(), inner: Arc::new(self.clone()) }
            }
        }
    }

    /// `θ_{x_w}`, in closed form for every catalogued shape.
    pub fn theta_var(&self, w: Variable) -> OpExpr {
        match self {
            OpExpr::Finite(op) => OpExpr::Finite(op.theta(&Poly::var(w))),
            OpExpr::Scale(c, inner) => OpExpr::scale(c.clone(), inner.theta_var(w)),
            OpExpr::Sum(parts) => OpExpr::sum(parts.iter().map(|p| p.theta_var(w)).collect()),
            OpExpr::Compose(a, b) => OpExpr::sum(vec![
                OpExpr::compose(a.theta_var(w), (**b).clone()),
                OpExpr::compose((**a).clone(), b.theta_var(w)),
            ]),
            OpExpr::TensorDer { inner, var, n } => {
                if *var == w {
                    // x_v commutes with the inner factor; [x_v, ∂_v^n] = −n ∂_v^{n−1}
                    let lowered = OpExpr::tensor_der((**inner).clone(), *var, n - 1).expect("freshness is inherited");
                    OpExpr::scale(rat(-(*n as i64)), lowered)
                } else {
                    OpExpr::tensor_der(inner.theta_var(w), *var, *n).expect("θ by another variable keeps freshness")
                }
            }
            OpExpr::Family(fam) => fam.theta_var(w),
            OpExpr::Limit(l) => match l.generator.branch_of(w) {
                Some(n) => l.branch(n).theta_var(w),
                None => OpExpr::zero(),
            },
            OpExpr::Lazy(l) => {
                let mut chain = l.chain.clone();
                chain.push(Poly::var(w));
                OpExpr::Lazy(Arc::new(LazyFamily::new(l.base.clone(), chain)))
            }
            OpExpr::Commutator { .. } => OpExpr::Commutator { r: Poly::var(w), inner: Arc::new(self.clone()) },
        }
    }

    /// `θ_r^k(D)`.
    pub fn theta_pow(&self, r: &Poly, k: u32) -> OpExpr {
        (0..k).fold(self.clone(), |acc, _| acc.theta(r))
    }

    /// Variables worth probing with commutators, most significant first.
    pub fn probe_variables(&self, budget: usize) -> Vec<Variable> {
        let mut out: Vec<Variable> = Vec::new();
        let push_all = |out: &mut Vec<Variable>, vs: Vec<Variable>| {
            for v in vs {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        };
        match self {
            OpExpr::Finite(op) => {
                let dv: Vec<Variable> = op.deriv_vars().into_iter().collect();
                push_all(&mut out, dv);
                push_all(&mut out, op.vars().into_iter().collect());
            }
            OpExpr::Scale(_, inner) => push_all(&mut out, inner.probe_variables(budget)),
            OpExpr::Sum(parts) => push_all(&mut out, interleave(parts.iter().map(|p| p.probe_variables(budget)))),
            OpExpr::Compose(l, r) => {
                push_all(&mut out, interleave([l.probe_variables(budget), r.probe_variables(budget)].into_iter()))
            }
            OpExpr::TensorDer { inner, var, .. } => {
                out.push(*var);
                if budget > 1 {
                    push_all(&mut out, inner.probe_variables(budget));
                }
            }
            OpExpr::Family(fam) => push_all(&mut out, fam.probes(budget)),
            // a single probe descends through second branches, which keeps
            // the probed order close to the branch's own order
            OpExpr::Limit(l) if budget == 1 => push_all(&mut out, l.branch(2).probe_variables(1)),
            OpExpr::Limit(l) => {
                for n in 1..=budget as u64 {
                    if let Some(v) = l.branch(n).probe_variables(1).first() {
                        push_all(&mut out, vec![*v]);
                    }
                }
            }
            OpExpr::Lazy(l) => {
                push_all(&mut out, l.base.probes(budget));
                for r in &l.chain {
                    push_all(&mut out, r.vars().into_iter().collect());
                }
            }
            OpExpr::Commutator { r, inner } => {
                push_all(&mut out, inner.probe_variables(budget));
                push_all(&mut out, r.vars().into_iter().collect());
            }
        }
        out.truncate(budget);
        out
    }

    /// Candidate inputs likely to expose a nonzero value.
    fn witness_candidates(&self, budget: usize) -> Vec<Poly> {
        match self {
            OpExpr::Finite(op) => op.nonzero_witness().into_iter().collect(),
            OpExpr::Scale(_, inner) => inner.witness_candidates(budget),
            OpExpr::Sum(parts) => parts.iter().flat_map(|p| p.witness_candidates(budget)).collect(),
            OpExpr::Compose(l, r) => {
                let mut c = r.witness_candidates(budget);
                let lc = l.witness_candidates(budget);
                for a in lc.iter().take(budget) {
                    for b in r.witness_candidates(budget).iter().take(budget) {
                        c.push(a * b);
                    }
                }
                c.extend(lc);
                c
            }
            OpExpr::TensorDer { inner, var, n } => {
                let y = Poly::var(*var).pow(*n);
                inner.witness_candidates(budget).iter().map(|f| f * &y).collect()
            }
            OpExpr::Family(fam) => fam
                .nonzero_indices(budget)
                .into_iter()
                .map(|i| Poly::term(Rational::one(), fam.deriv_at(i)))
                .collect(),
            OpExpr::Limit(l) => {
                (1..=budget as u64).flat_map(|n| l.branch(n).witness_candidates(1).into_iter().take(1)).collect()
            }
            OpExpr::Lazy(l) => {
                let start = l.base.start;
                (start..start + budget as i64).filter_map(|i| l.term(i).nonzero_witness()).collect()
            }
            OpExpr::Commutator { r, inner } => {
                let base = inner.witness_candidates(budget);
                let mut c = base.clone();
                for m in r.terms().map(|(m, _)| Poly::term(Rational::one(), m.clone())) {
                    c.extend(base.iter().map(|f| f * &m));
                }
                c
            }
        }
    }

    /// Semidecision of `self = 0`.
    pub fn zero_test(&self, budget: usize) -> ZeroVerdict {
        if let Some(cert) = self.zero_certificate() {
            return ZeroVerdict::Zero(cert);
        }
        let mut seen: std::collections::HashSet<Poly> = std::collections::HashSet::new();
        let mut try_one = |f: Poly| -> Option<Poly> {
            if !seen.insert(f.clone()) {
                return None;
            }
            (!self.apply(&f).is_zero()).then_some(f)
        };
        for f in self.witness_candidates(budget) {
            if let Some(w) = try_one(f) {
                return ZeroVerdict::NonZero(w);
            }
        }
        // generic probing: monomials of degree ≤ 2 in the probe variables
        let probes = self.probe_variables(budget);
        let mut generic = vec![Poly::one()];
        for (k, &v) in probes.iter().enumerate() {
            generic.push(Poly::var(v));
            for &w in &probes[..=k] {
                generic.push(&Poly::var(v) * &Poly::var(w));
            }
        }
        for f in generic.into_iter().take(budget * budget + 1) {
            if let Some(w) = try_one(f) {
                return ZeroVerdict::NonZero(w);
            }
        }
        ZeroVerdict::Unknown(budget)
    }

    /// `Some(λ)` when `self = λ·other` can be read off structurally.
    pub fn scalar_ratio(&self, other: &OpExpr) -> Option<Rational> {
        match (self, other) {
            (OpExpr::Scale(c, a), b) => a.scalar_ratio(b).map(|l| l * c),
            (a, OpExpr::Scale(c, b)) => a.scalar_ratio(b).map(|l| l / c),
            (OpExpr::Finite(a), OpExpr::Finite(b)) => {
                let (ka, ca, _) = a.terms().next().map(|(x, d, c)| ((x.clone(), d.clone()), c.clone(), ()))?;
                let cb = b.terms().find(|(x, d, _)| (*x, *d) == (&ka.0, &ka.1)).map(|t| t.2.clone())?;
                let lambda = ca / cb;
                (a == &b.scale(&lambda)).then_some(lambda)
            }
            (OpExpr::Family(a), OpExpr::Family(b)) => a.ratio(b),
            (OpExpr::TensorDer { inner: a, var: v, n }, OpExpr::TensorDer { inner: b, var: w, n: m })
                if v == w && n == m =>
            {
                a.scalar_ratio(b)
            }
            (OpExpr::Limit(a), OpExpr::Limit(b)) if Arc::ptr_eq(a, b) => Some(Rational::one()),
            _ => None,
        }
    }

    /// Largest family index touched when applying to monomials over `vars`.
    pub fn nodes(&self) -> usize {
        match self {
            OpExpr::Scale(_, i) | OpExpr::TensorDer { inner: i, .. } | OpExpr::Commutator { inner: i, .. } => {
                1 + i.nodes()
            }
            OpExpr::Sum(p) => 1 + p.iter().map(OpExpr::nodes).sum::<usize>(),
            OpExpr::Compose(a, b) => 1 + a.nodes() + b.nodes(),
            _ => 1,
        }
    }

    /// Depth of the expression tree (limit branches not expanded).
    pub fn depth(&self) -> usize {
        match self {
            OpExpr::Scale(_, i) | OpExpr::TensorDer { inner: i, .. } | OpExpr::Commutator { inner: i, .. } => {
                1 + i.depth()
            }
            OpExpr::Sum(p) => 1 + p.iter().map(OpExpr::depth).max().unwrap_or(0),
            OpExpr::Compose(a, b) => 1 + a.depth().max(b.depth()),
            _ => 1,
        }
    }
}

fn interleave(lists: impl Iterator<Item = Vec<Variable>>) -> Vec<Variable> {
    let lists: Vec<Vec<Variable>> = lists.collect();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest).flat_map(|k| lists.iter().filter_map(move |l| l.get(k).copied())).collect()
}

/// `Some((v, n))` when the operator is exactly `∂^n/∂v^n`.
fn pure_power_derivative(op: &WeylOp) -> Option<(Variable, u32)> {
    let mut it = op.terms();
    let (x, d, c) = it.next()?;
    if it.next().is_some() || !x.is_one() || !c.is_one() {
        return None;
    }
    match d.exponents() {
        [(v, n)] => Some((*v, *n)),
        _ => None,
    }
}

fn paren(e: &OpExpr) -> String {
    match e {
        OpExpr::Sum(_) => format!("({e})"),
        OpExpr::Finite(op) if op.num_terms() > 1 => format!("({e})"),
        _ => e.to_string(),
    }
}

impl fmt::Display for OpExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpExpr::Finite(op) => write!(f, "{op}"),
            OpExpr::Scale(c, inner) => write!(f, "{}*{}", fmt_signed(c), paren(inner)),
            OpExpr::Sum(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                f.write_str(&s.join(" + "))
            }
            OpExpr::Compose(a, b) => write!(f, "compose({a}, {b})"),
            OpExpr::TensorDer { inner, var, n } => write!(f, "tensorder({inner}, {var}, {n})"),
            OpExpr::Family(fam) => write!(f, "{fam}"),
            OpExpr::Limit(l) => f.write_str(&l.generator.describe()),
            OpExpr::Lazy(l) => {
                let mut s = l.base.to_string();
                for r in &l.chain {
                    s = format!("theta({r}, {s})");
                }
                f.write_str(&s)
            }
            OpExpr::Commutator { r, inner } => write!(f, "theta({r}, {inner})"),
        }
    }
}

fn fmt_signed(c: &Rational) -> String {
    if c.is_negative() {
        format!("({})", fmt_rational(c))
    } else {
        fmt_rational(c)
    }
}

/// Smallest positive integer fitting a rational coefficient, if integral.
pub fn as_i64(c: &Rational) -> Option<i64> {
    c.is_integer().then(|| c.numer().to_i64()).flatten()
}

/// `∂^e x^e = e!`; helper for tests and witnesses.
pub fn factorial_rational(e: u64) -> Rational {
    Rational::from_integer(falling_factorial(e, e))
}

pub fn apply(d: &OpExpr, f: &Poly) -> Poly {
    d.apply(f)
}

pub fn support_bound(d: &OpExpr, vars: &BTreeSet<Variable>, deg: u32) -> u64 {
    d.support_bound(vars, deg)
}

pub fn theta(r: &Poly, d: &OpExpr) -> OpExpr {
    d.theta(r)
}

pub fn zero_test(d: &OpExpr, budget: usize) -> ZeroVerdict {
    d.zero_test(budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: u64) -> Poly {
        Poly::x(i)
    }

    fn vars(ix: &[u64]) -> BTreeSet<Variable> {
        ix.iter().map(|&i| Variable::x(i)).collect()
    }

    fn d2() -> OpExpr {
        OpExpr::family(FamilyTermSpec::laplace())
    }

    fn d_omega() -> OpExpr {
        OpExpr::family(FamilyTermSpec::d_omega())
    }

    fn d_inf() -> OpExpr {
        OpExpr::family(FamilyTermSpec::d_infinity())
    }

    fn sh() -> OpExpr {
        OpExpr::family(FamilyTermSpec::shift())
    }

    #[test]
    fn apply_examples() {
        let f = &x(1).pow(2) + &x(3).pow(4);
        let expected = &Poly::from_int(2) + &x(3).pow(2).scale(&rat(12));
        assert_eq!(d2().apply(&f), expected);
        assert_eq!(d_omega().apply(&x(3).pow(3)), Poly::from_int(6));
        let shifted = sh().apply(&x(1).pow(2));
        assert_eq!(shifted.to_string(), "x1^2 + 2*x1 + 1");
    }

    #[test]
    fn support_bound_examples() {
        assert_eq!(d_omega().support_bound(&vars(&[1, 2, 3, 4, 5]), 3), 6);
        assert_eq!(sh().support_bound(&vars(&[1]), 7), 8);
        assert_eq!(d_inf().support_bound(&vars(&[1, 2, 4]), 9), 3);
    }

    #[test]
    fn theta_examples() {
        let t = d_omega().theta(&x(3));
        assert_eq!(t.as_finite().unwrap(), &WeylOp::derivative(Variable::x(3), 2).scale(&rat(-3)));
        let t = sh().theta(&x(1));
        assert_eq!(t.scalar_ratio(&sh()), Some(rat(-1)));
    }

    #[test]
    fn theta_on_tensor_lowers_the_fresh_derivative() {
        let y = Variable::y(0);
        let d = OpExpr::tensor_der(d_omega(), y, 2).unwrap();
        let t = d.theta_var(y);
        let expected = OpExpr::tensor_der(d_omega(), y, 1).unwrap();
        assert_eq!(t.scalar_ratio(&expected), Some(rat(-2)));
    }

    #[test]
    fn tensor_der_rejects_non_fresh_variables() {
        assert_eq!(OpExpr::tensor_der(d_omega(), Variable::x(4), 1).unwrap_err(), StreamError::NotFresh(Variable::x(4)));
    }

    #[test]
    fn zero_test_examples() {
        let t = d2().theta(&x(5)).theta(&x(5)).theta(&x(5));
        assert!(t.zero_test(8).is_zero());
        match d_inf().zero_test(8) {
            ZeroVerdict::NonZero(w) => assert_eq!(w, x(1)),
            other => panic!("expected a witness, got {other:?}"),
        }
        // commutator of x_i-families with an odd-index square: zero, but only
        // visible term by term
        let evens = OpExpr::family(FamilyTermSpec::single_var(1, 0, 2, 0, 2));
        let lazy = evens.theta(&x(5).pow(2));
        assert!(matches!(lazy, OpExpr::Lazy(_)));
        assert_eq!(lazy.zero_test(3), ZeroVerdict::Unknown(3));
    }

    #[test]
    fn prefix_theta_is_closed_form() {
        let t = d_inf().theta(&x(1));
        assert!(matches!(t, OpExpr::Family(_)));
        assert!(t.theta(&x(1)).zero_test(4).is_zero());
        // −θ_{x1}(D_∞) = id + ∂_2 + ∂_2∂_3 + ⋯
        let neg = OpExpr::scale(rat(-1), t);
        let f = &x(2) * &x(3);
        assert_eq!(neg.apply(&f), &(&f + &x(3)) + &Poly::one());
    }

    #[test]
    fn allocator_round_trip() {
        for path in [vec![], vec![0], vec![1], vec![3, 0, 2], vec![0, 0, 0, 7]] {
            let v = VariableAllocator::encode(&path).unwrap();
            assert_eq!(VariableAllocator::decode(v), Some(path));
        }
        assert_eq!(VariableAllocator::decode(Variable(2)), None);
        assert!(VariableAllocator::encode(&[1 << 40, 1 << 40]).is_none());
    }

    #[test]
    fn coefficient_forms() {
        let c = CoefForm::over_factorial(vec![rat(0), rat(-1)], 0);
        let fam = FamilyTermSpec { coef: c, ..FamilyTermSpec::shift() }.canonical();
        assert_eq!(fam.start, 1);
        assert_eq!(fam.coef, CoefForm::over_factorial(vec![rat(-1)], 1));
        let a = CoefForm::over_factorial(vec![rat(1)], 0);
        let b = CoefForm::over_factorial(vec![rat(1)], 1);
        let s = a.add(&b).unwrap();
        for i in 1..8 {
            assert_eq!(s.eval(i), a.eval(i) + b.eval(i));
        }
        assert!(CoefForm::constant(rat(1)).add(&a).is_none());
        let p = CoefForm::polynomial(vec![rat(1), rat(2), rat(3)]);
        for i in -3..5 {
            assert_eq!(p.shift(2).eval(i), p.eval(i + 2));
        }
    }

    #[test]
    fn display_catalogue() {
        assert_eq!(d2().to_string(), "family(i>=1, d(x[i])^2)");
        assert_eq!(d_omega().to_string(), "family(i>=1, d(x[i])^i)");
        assert_eq!(d_inf().to_string(), "prefixfamily(i>=1)");
        assert_eq!(sh().to_string(), "family(i>=0, (1/fact(i))*d(x1)^i)");
        let ys = OpExpr::family(FamilyTermSpec::single_var(1, Variable::Y_BASE as i64, 1, 1, 0));
        assert_eq!(ys.to_string(), "family(i>=1, d(y[i])^i)");
    }

    #[test]
    fn disjointness() {
        let evens = VarSupport::Progression { s: 0, t: 2, from: 1 };
        let odds = VarSupport::Progression { s: -1, t: 2, from: 1 };
        assert!(evens.disjoint(&odds));
        assert!(!evens.disjoint(&VarSupport::Progression { s: 0, t: 3, from: 1 }));
        let ys = VarSupport::Progression { s: Variable::Y_BASE as i64, t: 1, from: 1 };
        assert!(ys.disjoint(&VarSupport::From(1)));
        assert!(VarSupport::Block(vec![1]).disjoint(&VarSupport::Block(vec![2, 0])));
        assert!(!VarSupport::Block(vec![1]).disjoint(&VarSupport::Block(vec![1, 0])));
    }
}
