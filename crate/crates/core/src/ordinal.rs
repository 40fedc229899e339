//! Ordinals below ε₀ in Cantor normal form.
//!
//! An ordinal is stored as a strictly decreasing list of terms `ω^e · c`
//! with `c ≥ 1`, where every exponent `e` is itself an ordinal in the same
//! representation. The empty list is `0`.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrdinalError {
    #[error("{0} is not a limit ordinal")]
    NotLimit(Ordinal),
    #[error("fundamental sequence index must be positive")]
    ZeroIndex,
    #[error("malformed ordinal at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub exponent: Ordinal,
    pub coefficient: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ordinal {
    terms: Vec<Term>,
}

impl Ordinal {
    pub fn zero() -> Self {
        Ordinal { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::finite(1)
    }

    pub fn finite(n: u64) -> Self {
        if n == 0 {
            Self::zero()
        } else {
            Ordinal { terms: vec![Term { exponent: Self::zero(), coefficient: n }] }
        }
    }

    pub fn omega() -> Self {
        Self::omega_pow(Self::one())
    }

    /// `ω^e`.
    pub fn omega_pow(e: Ordinal) -> Self {
        Ordinal { terms: vec![Term { exponent: e, coefficient: 1 }] }
    }

    /// Builds an ordinal from `(exponent, coefficient)` pairs, normalizing
    /// order and merging equal exponents via ordinal addition.
    pub fn from_terms(terms: impl IntoIterator<Item = (Ordinal, u64)>) -> Self {
        terms
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .fold(Self::zero(), |acc, (e, c)| acc.add(&Ordinal { terms: vec![Term { exponent: e, coefficient: c }] }))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.as_finite().is_some()
    }

    pub fn as_finite(&self) -> Option<u64> {
        match self.terms.as_slice() {
            [] => Some(0),
            [t] if t.exponent.is_zero() => Some(t.coefficient),
            _ => None,
        }
    }

    pub fn is_successor(&self) -> bool {
        self.terms.last().is_some_and(|t| t.exponent.is_zero())
    }

    pub fn is_limit(&self) -> bool {
        self.terms.last().is_some_and(|t| !t.exponent.is_zero())
    }

    /// The predecessor of a successor ordinal.
    pub fn predecessor(&self) -> Option<Ordinal> {
        if !self.is_successor() {
            return None;
        }
        let mut terms = self.terms.clone();
        let last = terms.last_mut().unwrap();
        if last.coefficient == 1 {
            terms.pop();
        } else {
            last.coefficient -= 1;
        }
        Some(Ordinal { terms })
    }

    pub fn succ(&self) -> Ordinal {
        self.add(&Self::one())
    }

    /// Splits `self = infinite_part + n` with `n` finite.
    pub fn split_finite(&self) -> (Ordinal, u64) {
        match self.terms.last() {
            Some(t) if t.exponent.is_zero() => {
                let mut terms = self.terms.clone();
                let n = terms.pop().unwrap().coefficient;
                (Ordinal { terms }, n)
            }
            _ => (self.clone(), 0),
        }
    }

    /// Leading exponent; `None` for zero.
    pub fn degree(&self) -> Option<&Ordinal> {
        self.terms.first().map(|t| &t.exponent)
    }

    /// Ordinal sum `self + other` (not commutative).
    pub fn add(&self, other: &Ordinal) -> Ordinal {
        let Some(lead) = other.terms.first() else {
            return self.clone();
        };
        let mut terms: Vec<Term> = Vec::with_capacity(self.terms.len() + other.terms.len());
        for t in &self.terms {
            match t.exponent.cmp(&lead.exponent) {
                Ordering::Greater => terms.push(t.clone()),
                Ordering::Equal => {
                    terms.push(Term { exponent: t.exponent.clone(), coefficient: t.coefficient + lead.coefficient });
                    terms.extend(other.terms[1..].iter().cloned());
                    return Ordinal { terms };
                }
                Ordering::Less => break,
            }
        }
        terms.extend(other.terms.iter().cloned());
        Ordinal { terms }
    }

    /// Ordinal product `self · other` (not commutative).
    pub fn mul(&self, other: &Ordinal) -> Ordinal {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let lead = &self.terms[0];
        let mut acc = Self::zero();
        for t in &other.terms {
            let piece = if t.exponent.is_zero() {
                let mut terms = self.terms.clone();
                terms[0].coefficient = lead
                    .coefficient
                    .checked_mul(t.coefficient)
                    .expect("ordinal coefficient overflow");
                Ordinal { terms }
            } else {
                Ordinal {
                    terms: vec![Term { exponent: lead.exponent.add(&t.exponent), coefficient: t.coefficient }],
                }
            };
            acc = acc.add(&piece);
        }
        acc
    }

    /// Hessenberg natural sum: commutative, strictly monotone in both arguments.
    pub fn natural_sum(&self, other: &Ordinal) -> Ordinal {
        let mut terms: Vec<Term> = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let ord = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => a.exponent.cmp(&b.exponent),
                (Some(_), None) => Ordering::Greater,
                _ => Ordering::Less,
            };
            match ord {
                Ordering::Greater => {
                    terms.push(self.terms[i].clone());
                    i += 1;
                }
                Ordering::Less => {
                    terms.push(other.terms[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    terms.push(Term {
                        exponent: self.terms[i].exponent.clone(),
                        coefficient: self.terms[i].coefficient + other.terms[j].coefficient,
                    });
                    i += 1;
                    j += 1;
                }
            }
        }
        Ordinal { terms }
    }

    /// The `n`-th element (`n ≥ 1`) of the canonical fundamental sequence of a
    /// limit ordinal: `γ + ω^(σ+1)` maps to `γ + ω^σ·n` and `γ + ω^λ`, `λ`
    /// limit, maps to `γ + ω^(λ[n])`.
    pub fn fundamental_sequence(&self, n: u64) -> Result<Ordinal, OrdinalError> {
        if n == 0 {
            return Err(OrdinalError::ZeroIndex);
        }
        if !self.is_limit() {
            return Err(OrdinalError::NotLimit(self.clone()));
        }
        let mut terms = self.terms.clone();
        let last = terms.pop().unwrap();
        if last.coefficient > 1 {
            terms.push(Term { exponent: last.exponent.clone(), coefficient: last.coefficient - 1 });
        }
        let prefix = Ordinal { terms };
        let tail = match last.exponent.predecessor() {
            Some(sigma) => Ordinal { terms: vec![Term { exponent: sigma, coefficient: n }] },
            None => Ordinal::omega_pow(last.exponent.fundamental_sequence(n)?),
        };
        Ok(prefix.add(&tail))
    }

    /// The least ordinal `ζ` with `ζ + 1 = min((γ+1)(δ+1), (δ+1)(γ+1))`.
    pub fn composition_bound(gamma: &Ordinal, delta: &Ordinal) -> Ordinal {
        let g1 = gamma.succ();
        let d1 = delta.succ();
        let a = g1.mul(&d1);
        let b = d1.mul(&g1);
        a.min(b).predecessor().expect("product of successors is a successor")
    }

    /// ASCII rendering using `w` for ω.
    pub fn to_ascii(&self) -> String {
        self.render("w")
    }

    fn render(&self, omega: &str) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                if t.exponent.is_zero() {
                    return t.coefficient.to_string();
                }
                let mut s = omega.to_string();
                if t.exponent != Ordinal::one() {
                    let e = t.exponent.render(omega);
                    if t.exponent.is_finite() || t.exponent == Ordinal::omega() {
                        s.push('^');
                        s.push_str(&e);
                    } else {
                        s.push_str(&format!("^({e})"));
                    }
                }
                if t.coefficient > 1 {
                    s.push_str(&format!("*{}", t.coefficient));
                }
                s
            })
            .collect();
        parts.join(" + ")
    }

    /// Parses the text syntax `w^2*3 + w*2 + 5` (the glyph `ω` is accepted for
    /// `w`). Sums, products and `w^e` are evaluated with ordinal arithmetic.
    pub fn parse(text: &str) -> Result<Ordinal, OrdinalError> {
        let mut p = OrdParser { chars: text.char_indices().collect(), pos: 0 };
        let v = p.sum()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(v)
    }
}

impl PartialOrd for Ordinal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordinal {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.terms.iter().zip(&other.terms) {
            let c = a.exponent.cmp(&b.exponent).then(a.coefficient.cmp(&b.coefficient));
            if c != Ordering::Equal {
                return c;
            }
        }
        self.terms.len().cmp(&other.terms.len())
    }
}

impl fmt::Display for Ordinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if f.alternate() {
            f.write_str(&self.render("w"))
        } else {
            f.write_str(&self.render("ω"))
        }
    }
}

impl From<u64> for Ordinal {
    fn from(n: u64) -> Self {
        Ordinal::finite(n)
    }
}

struct OrdParser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl OrdParser {
    fn err(&self, msg: &str) -> OrdinalError {
        let pos = self.chars.get(self.pos).map_or_else(|| self.chars.last().map_or(0, |c| c.0 + 1), |c| c.0);
        OrdinalError::Parse { pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.1.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn sum(&mut self) -> Result<Ordinal, OrdinalError> {
        let mut acc = self.product()?;
        while self.peek() == Some('+') {
            self.pos += 1;
            acc = acc.add(&self.product()?);
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Ordinal, OrdinalError> {
        let mut acc = self.power()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            acc = acc.mul(&self.power()?);
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<Ordinal, OrdinalError> {
        let base_is_omega = matches!(self.peek(), Some('w' | 'ω'));
        let base = self.atom()?;
        if self.peek() == Some('^') {
            if !base_is_omega {
                return Err(self.err("only ω may be raised to a power"));
            }
            self.pos += 1;
            let e = self.atom()?;
            return Ok(Ordinal::omega_pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ordinal, OrdinalError> {
        match self.peek() {
            Some('w' | 'ω') => {
                self.pos += 1;
                Ok(Ordinal::omega())
            }
            Some('(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.1.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                digits.parse::<u64>().map(Ordinal::finite).map_err(|_| self.err("integer too large"))
            }
            _ => Err(self.err("expected a number, w, or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(s: &str) -> Ordinal {
        Ordinal::parse(s).unwrap()
    }

    #[test]
    fn compare_examples() {
        assert!(Ordinal::omega() > Ordinal::finite(3));
        assert_eq!(o("w*2+1").cmp(&o("w*2+1")), Ordering::Equal);
        assert!(o("w^2") > o("w*5+7"));
    }

    #[test]
    fn add_examples() {
        assert_eq!(Ordinal::one().add(&Ordinal::omega()), Ordinal::omega());
        assert_eq!(Ordinal::omega().add(&Ordinal::one()).to_ascii(), "w + 1");
        assert_eq!(o("w^2+w").add(&o("w+3")), o("w^2 + w*2 + 3"));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(Ordinal::finite(2).mul(&Ordinal::omega()), Ordinal::omega());
        assert_eq!(Ordinal::omega().mul(&Ordinal::finite(2)).to_ascii(), "w*2");
        assert_eq!(o("w+1").mul(&o("w+1")), o("w^2+w+1"));
    }

    #[test]
    fn fundamental_sequence_examples() {
        assert_eq!(Ordinal::omega().fundamental_sequence(5).unwrap(), Ordinal::finite(5));
        assert_eq!(o("w^2").fundamental_sequence(3).unwrap(), o("w*3"));
        assert_eq!(o("w*2").fundamental_sequence(4).unwrap(), o("w+4"));
        assert_eq!(o("w^w").fundamental_sequence(3).unwrap(), o("w^3"));
        assert_eq!(o("w^(w+1)").fundamental_sequence(2).unwrap(), o("w^w*2"));
    }

    #[test]
    fn fundamental_sequence_rejects_non_limits() {
        assert!(matches!(Ordinal::zero().fundamental_sequence(1), Err(OrdinalError::NotLimit(_))));
        assert!(matches!(o("w+1").fundamental_sequence(1), Err(OrdinalError::NotLimit(_))));
        assert_eq!(Ordinal::omega().fundamental_sequence(0), Err(OrdinalError::ZeroIndex));
    }

    #[test]
    fn printing() {
        assert_eq!(o("w^2*3 + w*2 + 5").to_ascii(), "w^2*3 + w*2 + 5");
        assert_eq!(o("w^(w+1)").to_string(), "ω^(ω + 1)");
        assert_eq!(o("w^w*2").to_ascii(), "w^w*2");
        assert_eq!(Ordinal::zero().to_ascii(), "0");
        assert_eq!(o("ω^2").to_ascii(), "w^2");
    }

    #[test]
    fn parse_errors() {
        assert!(Ordinal::parse("3^2").is_err());
        assert!(Ordinal::parse("w +").is_err());
        assert!(Ordinal::parse("w)").is_err());
    }

    #[test]
    fn natural_sum_and_bound() {
        assert_eq!(o("w").natural_sum(&o("w")), o("w*2"));
        assert_eq!(o("3").natural_sum(&o("w")), o("w+3"));
        // min((ω+1)(n+1), (n+1)(ω+1)) = ω+n+1
        assert_eq!(Ordinal::composition_bound(&o("w"), &o("2")), o("w+2"));
        assert_eq!(Ordinal::composition_bound(&o("2"), &o("3")), o("11"));
    }

    #[test]
    fn predecessor_and_split() {
        assert_eq!(o("w+3").predecessor(), Some(o("w+2")));
        assert_eq!(o("w").predecessor(), None);
        assert_eq!(o("w^2+4").split_finite(), (o("w^2"), 4));
    }
}
