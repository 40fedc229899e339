//! Parsers for polynomials and operator expressions, and the command-line
//! front end.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num::{One, Zero};
use thiserror::Error;

use crate::construct::{build_at, build_d, summarize, verify_order_probes, BuildAddress};
use crate::localize::{extend, glue, hom_vanishing, LocalOperator, LocalizeError, LocalizedPoly};
use crate::order::{analyze_ordinal_order, classify_with, r_order_traced, DiffClass, OrderVerdict, OrdinalOrderVerdict};
use crate::ordinal::Ordinal;
use crate::ring::{Monomial, Poly, Variable};
use crate::stream::{CoefForm, DerivPattern, FamilyTermSpec, OpExpr, StreamError};
use crate::torsion::{
    is_torsion_element, module_report, quite_rank, strong_level, TorsionSetup, TorsionVerdict,
};
use crate::weyl::WeylOp;
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed term at position {pos}: {msg}")]
    MalformedTerm { pos: usize, msg: String },
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
}

impl From<StreamError> for ParseError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::UnsupportedFamily(m) => ParseError::UnsupportedFamily(m),
            other => ParseError::MalformedTerm { pos: 0, msg: other.to_string() },
        }
    }
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

const MAX_EXPONENT: u64 = 64;

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner { src, pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::MalformedTerm { pos: self.pos, msg: msg.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.rest().chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    /// Character immediately at the cursor, whitespace included.
    fn peek_raw(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        self.skip_ws();
        let r = self.rest();
        if r.starts_with(w) && !r[w.len()..].starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += w.len();
            true
        } else {
            false
        }
    }

    fn at_word(&mut self, w: &str) -> bool {
        let save = self.pos;
        let ok = self.eat_word(w);
        self.pos = save;
        ok
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn uint(&mut self) -> PResult<u64> {
        self.skip_ws();
        let digits: String = self.rest().chars().take_while(char::is_ascii_digit).collect();
        if digits.is_empty() {
            return self.err("expected a number");
        }
        let n = digits.parse::<u64>();
        match n {
            Ok(n) => {
                self.pos += digits.len();
                Ok(n)
            }
            Err(_) => self.err("number too large"),
        }
    }

    /// Exponent, bounded to keep evaluation tractable.
    fn exponent(&mut self) -> PResult<u32> {
        let n = self.uint()?;
        if n > MAX_EXPONENT {
            return self.err(format!("exponent exceeds {MAX_EXPONENT}"));
        }
        Ok(n as u32)
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat('-');
        let n = self.uint()? as i64;
        Ok(if neg { -n } else { n })
    }

    /// `p` or `p/q`.
    fn rational(&mut self) -> PResult<Rational> {
        let n = self.uint()?;
        if self.peek_raw() == Some('/') && self.src[self.pos + 1..].starts_with(|c: char| c.is_ascii_digit()) {
            self.pos += 1;
            let d = self.uint()?;
            if d == 0 {
                return self.err("division by zero");
            }
            return Ok(Rational::new(n.into(), d.into()));
        }
        if self.peek_raw().is_some_and(|c| c.is_ascii_alphabetic() || c == '(') {
            return self.err("explicit '*' required between a number and what follows");
        }
        Ok(Rational::from_integer(n.into()))
    }

    /// Text up to the matching close parenthesis (the opening one consumed).
    fn balanced(&mut self) -> PResult<&'a str> {
        let start = self.pos;
        let mut depth = 1;
        for (k, c) in self.rest().char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        self.pos = start + k + 1;
                        return Ok(&self.src[start..start + k]);
                    }
                }
                _ => {}
            }
        }
        self.err("unbalanced parenthesis")
    }
}

// ---------------------------------------------------------------------------
// Polynomials

/// Index syntax `x1`, `x_1`, `x[1]`, `y`, `y2`, `y[2]`; bare `x` is `x1`.
fn variable(s: &mut Scanner) -> PResult<Option<Variable>> {
    s.skip_ws();
    let c = match s.peek_raw() {
        Some(c @ ('x' | 'y')) => c,
        _ => return Ok(None),
    };
    let after = s.src[s.pos + 1..].chars().next();
    if after.is_some_and(|a| a.is_ascii_alphabetic()) {
        return Ok(None);
    }
    s.pos += 1;
    let idx = match s.peek_raw() {
        Some('[') => {
            s.pos += 1;
            let n = s.uint()?;
            s.expect(']')?;
            Some(n)
        }
        Some('_') => {
            s.pos += 1;
            Some(s.uint()?)
        }
        Some(d) if d.is_ascii_digit() => Some(s.uint()?),
        _ => None,
    };
    Ok(Some(match (c, idx) {
        ('x', Some(0)) => return s.err("x-indices start at 1"),
        ('x', i) => Variable::x(i.unwrap_or(1)),
        (_, i) => Variable::y(i.unwrap_or(0)),
    }))
}

fn poly_expr(s: &mut Scanner) -> PResult<Poly> {
    let mut acc = if s.eat('-') { -&poly_term(s)? } else { poly_term(s)? };
    loop {
        if s.eat('+') {
            acc = &acc + &poly_term(s)?;
        } else if s.eat('-') {
            acc = &acc - &poly_term(s)?;
        } else {
            return Ok(acc);
        }
    }
}

fn poly_term(s: &mut Scanner) -> PResult<Poly> {
    let mut acc = poly_power(s)?;
    while s.eat('*') {
        acc = &acc * &poly_power(s)?;
    }
    Ok(acc)
}

fn poly_power(s: &mut Scanner) -> PResult<Poly> {
    let base = poly_atom(s)?;
    if s.eat('^') {
        let e = s.exponent()?;
        return Ok(base.pow(e));
    }
    Ok(base)
}

fn poly_atom(s: &mut Scanner) -> PResult<Poly> {
    match s.peek() {
        Some('(') => {
            s.pos += 1;
            let p = poly_expr(s)?;
            s.expect(')')?;
            Ok(p)
        }
        Some('-') => {
            s.pos += 1;
            Ok(-&poly_power(s)?)
        }
        Some(c) if c.is_ascii_digit() => Ok(Poly::constant(s.rational()?)),
        Some(_) => match variable(s)? {
            Some(v) => Ok(Poly::var(v)),
            None => s.err("expected a number, variable or '('"),
        },
        None => s.err("unexpected end of input"),
    }
}

pub fn parse_poly(text: &str) -> Result<Poly, ParseError> {
    let mut s = Scanner::new(text);
    let p = poly_expr(&mut s)?;
    if !s.at_end() {
        return s.err("unexpected trailing input");
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Operators

pub fn parse_op(text: &str) -> Result<OpExpr, ParseError> {
    let mut s = Scanner::new(text);
    let e = op_expr(&mut s)?;
    if !s.at_end() {
        return s.err("unexpected trailing input");
    }
    Ok(e)
}

fn op_expr(s: &mut Scanner) -> PResult<OpExpr> {
    let mut parts = Vec::new();
    parts.push(op_term(s)?);
    loop {
        if s.eat('+') {
            parts.push(op_term(s)?);
        } else if s.eat('-') {
            parts.push(OpExpr::scale(-Rational::one(), op_term(s)?));
        } else {
            return Ok(OpExpr::sum(parts));
        }
    }
}

fn op_term(s: &mut Scanner) -> PResult<OpExpr> {
    let neg = s.eat('-');
    let mut acc = op_power(s)?;
    while s.eat('*') {
        let rhs = op_power(s)?;
        acc = OpExpr::compose(acc, rhs);
    }
    Ok(if neg { OpExpr::scale(-Rational::one(), acc) } else { acc })
}

fn op_power(s: &mut Scanner) -> PResult<OpExpr> {
    let base = op_atom(s)?;
    if s.eat('^') {
        let e = s.exponent()?;
        let mut out = OpExpr::identity();
        for _ in 0..e {
            out = OpExpr::compose(out, base.clone());
        }
        return Ok(out);
    }
    Ok(base)
}

fn op_atom(s: &mut Scanner) -> PResult<OpExpr> {
    match s.peek() {
        None => return s.err("unexpected end of input"),
        Some('(') => {
            s.pos += 1;
            let e = op_expr(s)?;
            s.expect(')')?;
            return Ok(e);
        }
        Some(c) if c.is_ascii_digit() => return Ok(OpExpr::finite(WeylOp::scalar(s.rational()?))),
        _ => {}
    }
    if s.eat_word("d") {
        s.expect('(')?;
        let v = variable(s)?.map_or_else(|| s.err("expected a variable"), Ok)?;
        s.expect(')')?;
        return Ok(OpExpr::finite(WeylOp::derivative(v, 1)));
    }
    if s.eat_word("family") {
        return family(s, false);
    }
    if s.eat_word("prefixfamily") {
        return family(s, true);
    }
    if s.eat_word("tensorder") {
        s.expect('(')?;
        let inner = op_expr(s)?;
        s.expect(',')?;
        let v = variable(s)?.map_or_else(|| s.err("expected a variable"), Ok)?;
        s.expect(',')?;
        let n = s.exponent()?;
        s.expect(')')?;
        return OpExpr::tensor_der(inner, v, n).map_err(ParseError::from);
    }
    if s.eat_word("compose") {
        s.expect('(')?;
        let a = op_expr(s)?;
        s.expect(',')?;
        let b = op_expr(s)?;
        s.expect(')')?;
        return Ok(OpExpr::compose(a, b));
    }
    if s.eat_word("theta") {
        s.expect('(')?;
        let r = poly_expr(s)?;
        s.expect(',')?;
        let e = op_expr(s)?;
        s.expect(')')?;
        return Ok(e.theta(&r));
    }
    if s.eat_word("dalpha") {
        s.expect('(')?;
        let pos = s.pos;
        let body = s.balanced()?;
        let (ord_text, path) = match body.split_once('@') {
            Some((o, p)) => (o, Some(p)),
            None => (body, None),
        };
        let alpha = parse_ordinal(ord_text.trim()).map_err(|msg| ParseError::MalformedTerm { pos, msg })?;
        let at = match path.map(str::trim) {
            None | Some("root") => BuildAddress::root(),
            Some(p) => BuildAddress(
                p.split('.')
                    .map(|t| t.trim().parse::<u64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| ParseError::MalformedTerm { pos, msg: "bad block address".into() })?,
            ),
        };
        return Ok(if path.is_some() { build_at(&alpha, &at) } else { build_d(&alpha) });
    }
    match variable(s)? {
        Some(v) => Ok(OpExpr::finite(WeylOp::mult(&Poly::var(v)))),
        None => s.err("expected an operator"),
    }
}

/// Largest coefficient accepted anywhere in an ordinal; the construction
/// unfolds successor chains one step at a time.
const MAX_ORDINAL_COEFFICIENT: u64 = 64;

fn ordinal_is_small(a: &Ordinal) -> bool {
    a.terms().iter().all(|t| t.coefficient <= MAX_ORDINAL_COEFFICIENT && ordinal_is_small(&t.exponent))
}

pub fn parse_ordinal(text: &str) -> Result<Ordinal, String> {
    let a = Ordinal::parse(text).map_err(|e| e.to_string())?;
    if !ordinal_is_small(&a) {
        return Err(format!("ordinal coefficients above {MAX_ORDINAL_COEFFICIENT} are not supported"));
    }
    Ok(a)
}

/// Affine function `t·i + s` of the family index.
fn affine(s: &mut Scanner) -> PResult<(i64, i64)> {
    let p = ipoly_expr(s)?;
    if p.len() > 2 {
        return Err(ParseError::UnsupportedFamily("index expressions must be affine in i".into()));
    }
    let as_int = |c: &Rational| -> PResult<i64> {
        c.is_integer()
            .then(|| c.numer().try_into().ok())
            .flatten()
            .map_or_else(|| Err(ParseError::UnsupportedFamily("index expressions need integer coefficients".into())), Ok)
    };
    let b = p.first().map_or(Ok(0), as_int)?;
    let a = p.get(1).map_or(Ok(0), as_int)?;
    Ok((a, b))
}

type IPoly = Vec<Rational>;

fn ipoly_add(a: &IPoly, b: &IPoly, sign: i64) -> IPoly {
    let n = a.len().max(b.len());
    let sgn = Rational::from_integer(sign.into());
    let mut out: IPoly =
        (0..n).map(|k| a.get(k).cloned().unwrap_or_default() + b.get(k).cloned().unwrap_or_default() * &sgn).collect();
    while out.last().is_some_and(Zero::is_zero) {
        out.pop();
    }
    out
}

fn ipoly_mul(a: &[Rational], b: &[Rational]) -> IPoly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Polynomial in the family index `i`.
fn ipoly_expr(s: &mut Scanner) -> PResult<IPoly> {
    let mut acc = if s.eat('-') { ipoly_add(&Vec::new(), &ipoly_term(s)?, -1) } else { ipoly_term(s)? };
    loop {
        if s.eat('+') {
            acc = ipoly_add(&acc, &ipoly_term(s)?, 1);
        } else if s.eat('-') {
            acc = ipoly_add(&acc, &ipoly_term(s)?, -1);
        } else {
            return Ok(acc);
        }
    }
}

fn ipoly_term(s: &mut Scanner) -> PResult<IPoly> {
    let mut acc = ipoly_power(s)?;
    while s.eat('*') {
        acc = ipoly_mul(&acc, &ipoly_power(s)?);
    }
    Ok(acc)
}

fn ipoly_power(s: &mut Scanner) -> PResult<IPoly> {
    let base = match s.peek() {
        Some('(') => {
            s.pos += 1;
            let p = ipoly_expr(s)?;
            s.expect(')')?;
            p
        }
        Some(c) if c.is_ascii_digit() => {
            let r = s.rational()?;
            if r.is_zero() { Vec::new() } else { vec![r] }
        }
        _ if s.eat_word("i") => vec![Rational::zero(), Rational::one()],
        _ => return s.err("expected a polynomial in i"),
    };
    if s.eat('^') {
        let e = s.exponent()?;
        return Ok((0..e).fold(vec![Rational::one()], |acc, _| ipoly_mul(&acc, &base)));
    }
    Ok(base)
}

enum BodyItem {
    Coef(IPoly),
    FactShift(i64),
    Factor(Monomial),
    Deriv(DerivPattern),
}

fn family(s: &mut Scanner, prefix: bool) -> PResult<OpExpr> {
    s.expect('(')?;
    if !s.eat_word("i") || !s.eat('>') || !s.eat('=') {
        return s.err("expected 'i>=N'");
    }
    let start = s.int()?;
    let mut skip = BTreeSet::new();
    let mut items = Vec::new();
    while s.eat(',') {
        if prefix && s.eat_word("skip") {
            s.expect('(')?;
            loop {
                skip.insert(s.uint()?);
                if !s.eat(',') {
                    break;
                }
            }
            s.expect(')')?;
            continue;
        }
        loop {
            items.push(body_item(s)?);
            if !s.eat('*') {
                break;
            }
        }
    }
    s.expect(')')?;
    let mut coef = CoefForm::constant(Rational::one());
    let mut factor = Monomial::one();
    let mut pattern = prefix.then_some(DerivPattern::Prefix { skip });
    for item in items {
        match item {
            BodyItem::Coef(p) => {
                let mut c = CoefForm::polynomial(ipoly_mul(coef.poly(), &p));
                if let Some(sh) = coef.factorial_shift() {
                    c = CoefForm::over_factorial(c.poly().to_vec(), sh);
                }
                coef = c;
            }
            BodyItem::FactShift(sh) => {
                if coef.factorial_shift().is_some() {
                    return Err(ParseError::UnsupportedFamily("at most one factorial per family".into()));
                }
                coef = CoefForm::over_factorial(coef.poly().to_vec(), sh);
            }
            BodyItem::Factor(m) => factor = factor.mul(&m),
            BodyItem::Deriv(d) => {
                if pattern.is_some() {
                    return Err(ParseError::UnsupportedFamily("exactly one derivative pattern per family".into()));
                }
                pattern = Some(d);
            }
        }
    }
    let pattern = pattern.ok_or_else(|| ParseError::UnsupportedFamily("missing derivative pattern".into()))?;
    Ok(OpExpr::family(FamilyTermSpec::new(coef, pattern, factor, start)?))
}

fn body_item(s: &mut Scanner) -> PResult<BodyItem> {
    if s.peek() == Some('(') {
        let save = s.pos;
        s.pos += 1;
        if s.eat('1') && s.eat('/') && s.eat_word("fact") {
            s.expect('(')?;
            let (a, b) = affine(s)?;
            s.expect(')')?;
            s.expect(')')?;
            if a != 1 {
                return Err(ParseError::UnsupportedFamily("factorials must be of i - s".into()));
            }
            return Ok(BodyItem::FactShift(-b));
        }
        s.pos = save;
        return Ok(BodyItem::Coef(ipoly_power(s)?));
    }
    if s.peek().is_some_and(|c| c.is_ascii_digit()) || s.at_word("i") {
        return Ok(BodyItem::Coef(ipoly_power(s)?));
    }
    if s.eat_word("d") {
        s.expect('(')?;
        s.skip_ws();
        let ns = s.peek_raw();
        let indexed = matches!(ns, Some('x' | 'y')) && s.src[s.pos + 1..].trim_start().starts_with('[') && {
            let inner = &s.src[s.pos + 1..];
            let close = inner.find(']').unwrap_or(inner.len());
            inner[..close].contains('i')
        };
        let target = if indexed {
            s.pos += 1;
            s.expect('[')?;
            let (t, off) = affine(s)?;
            s.expect(']')?;
            let base = if ns == Some('y') { Variable::Y_BASE as i64 } else { 0 };
            Err((base + off, t))
        } else {
            Ok(variable(s)?.map_or_else(|| s.err("expected a variable"), Ok)?)
        };
        s.expect(')')?;
        let (a, b) = if s.eat('^') {
            if s.peek().is_some_and(|c| c.is_ascii_digit()) {
                (0, s.uint()? as i64)
            } else {
                match s.peek() {
                    Some('(') => {
                        s.pos += 1;
                        let ab = affine(s)?;
                        s.expect(')')?;
                        ab
                    }
                    _ => {
                        if !s.eat_word("i") {
                            return s.err("expected an exponent");
                        }
                        (1, 0)
                    }
                }
            }
        } else {
            (0, 1)
        };
        return Ok(BodyItem::Deriv(match target {
            Err((off, t)) => DerivPattern::SingleVar { s: off, t, a, b },
            Ok(v) => DerivPattern::FixedVar { v, a, b },
        }));
    }
    match variable(s)? {
        Some(v) => {
            let e = if s.eat('^') { s.exponent()? } else { 1 };
            Ok(BodyItem::Factor(Monomial::var_pow(v, e)))
        }
        None => s.err("expected a family body item"),
    }
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Plain,
    Record,
}

#[derive(Debug, Parser)]
#[command(name = "transdiff", version, about = "Infinite differential operators, ordinal orders and torsion classes")]
pub struct Cli {
    /// Probe budget for zero tests and classification.
    #[arg(long, global = true, default_value_t = 8)]
    pub budget: usize,
    /// Maximal number of commutator steps.
    #[arg(long, global = true, default_value_t = 12)]
    pub cap: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Plain)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply an operator to a polynomial.
    Apply { op: String, poly: String },
    /// Commutator `r∘D − D∘r`.
    Theta { r: String, op: String },
    /// Ordinal order of an operator.
    Order { op: String },
    /// Order with respect to a ring element.
    Rorder { r: String, op: String },
    /// Strongly / quite / plain differential, or not differential.
    Classify { op: String },
    /// Build `D_α` and check it against `α`.
    BuildDalpha { alpha: String },
    /// Torsion classes of preset monomial modules.
    Torsion {
        #[command(subcommand)]
        action: TorsionAction,
    },
    /// Extension to a principal localization.
    Localize {
        #[command(subcommand)]
        action: LocalizeAction,
    },
    /// Glue chart extensions over the cover `R[1/f]`, `R[1/g]` of `k[x]`.
    Glue {
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
        #[arg(long)]
        op: String,
        /// Operator on the second chart (defaults to `--op`).
        #[arg(long)]
        op2: Option<String>,
        #[arg(long, default_value_t = 10)]
        degree: u32,
    },
    /// Homomorphisms out of a localization.
    Colocal {
        #[command(subcommand)]
        action: ColocalAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum TorsionAction {
    Classify {
        #[arg(long)]
        preset: String,
    },
    Rank {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        element: String,
    },
    StrongLevel {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        element: String,
    },
    IsTorsion {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        element: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum LocalizeAction {
    Extend {
        #[arg(long)]
        op: String,
        #[arg(long)]
        at: String,
    },
    Apply {
        #[arg(long)]
        op: String,
        #[arg(long)]
        at: String,
        /// `num / f^k`.
        #[arg(long)]
        input: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ColocalAction {
    Hom {
        #[arg(long)]
        f: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Input(String),
}

/// Lines of a report: the verdict first, then details.
#[derive(Debug, Default)]
struct Report {
    verdict: String,
    details: Vec<(String, String)>,
}

impl Report {
    fn new(verdict: impl Into<String>) -> Self {
        Report { verdict: verdict.into(), details: Vec::new() }
    }

    fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.details.push((key.to_string(), value.into()));
        self
    }
}

fn input_text(arg: &str, stdin: &mut dyn Read) -> Result<String, CliError> {
    if arg != "-" {
        return Ok(arg.to_string());
    }
    let mut buf = String::new();
    stdin.read_to_string(&mut buf).map_err(|e| CliError::Input(format!("reading stdin: {e}")))?;
    Ok(buf.trim().to_string())
}

fn monomial_arg(text: &str) -> Result<Monomial, CliError> {
    let p = parse_poly(text)?;
    match p.terms().collect::<Vec<_>>().as_slice() {
        [(m, _)] => Ok((*m).clone()),
        _ => Err(CliError::Input(format!("{text:?} is not a monomial"))),
    }
}

fn preset(name: &str) -> Result<TorsionSetup, CliError> {
    TorsionSetup::preset(name).map_err(|e| {
        CliError::Input(format!("{e}; available: {}", crate::torsion::PRESETS.join(", ")))
    })
}

/// `num / den` with `den` a power of `f`.
fn localized_arg(text: &str, f: &Poly) -> Result<LocalizedPoly, CliError> {
    let Some((num, den)) = text.rsplit_once(" / ") else {
        return Ok(LocalizedPoly::embed(parse_poly(text)?));
    };
    let num = parse_poly(num)?;
    let den = parse_poly(den)?;
    let mut power = Poly::one();
    for k in 0..=den.degree().unwrap_or(0) {
        if power == den {
            return Ok(LocalizedPoly { num, k });
        }
        power = &power * f;
    }
    Err(CliError::Input(format!("denominator {den} is not a power of {f}")))
}

/// The extension, or the verdict explaining why there is none.
fn local(op: &OpExpr, f: &Poly, cap: u64) -> Result<Result<LocalOperator, Report>, CliError> {
    match extend(op, f, cap) {
        Ok(l) => Ok(Ok(l)),
        Err(LocalizeError::InfiniteLocalOrder(_)) => Ok(Err(Report::new(format!("does not extend: infinite {f}-order")))),
        Err(e @ LocalizeError::OrderUnknown(..)) => Ok(Err(Report::new(format!("unknown: {e}")))),
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

fn order_line(v: &OrdinalOrderVerdict) -> String {
    match v {
        OrdinalOrderVerdict::Exact(a) if a.is_finite() => format!("strongly differential, order {a}"),
        OrdinalOrderVerdict::Exact(a) => format!("quite differential, ordinal order {a}"),
        OrdinalOrderVerdict::UpperBound(a) if a.is_finite() => format!("strongly differential, order ≤ {a}"),
        OrdinalOrderVerdict::UpperBound(a) => format!("quite differential, ordinal order ≤ {a}"),
        OrdinalOrderVerdict::NoOrdinalOrder(w) => format!("no ordinal order; witness sequence {w}"),
        OrdinalOrderVerdict::Unknown => "ordinal order unknown".to_string(),
    }
}

fn rorder_line(r: &Poly, v: &OrderVerdict, cap: u64) -> String {
    match v {
        OrderVerdict::Exact(n) => format!("{r}-order {n}"),
        OrderVerdict::AtLeast(n) => format!("{r}-order ≥ {n} (undetermined within cap {cap})"),
        OrderVerdict::InfiniteCertified(c) => format!("infinite {r}-order ({c})"),
    }
}

fn probe_summary(probes: &[(Poly, OrderVerdict)]) -> String {
    let exact: Vec<u64> = probes
        .iter()
        .filter_map(|(_, v)| match v {
            OrderVerdict::Exact(n) => Some(*n),
            _ => None,
        })
        .collect();
    if exact.len() == probes.len() && !exact.is_empty() && exact.iter().all(|n| *n == exact[0]) {
        return format!("x_i-order {}", exact[0]);
    }
    let parts: Vec<String> = probes.iter().map(|(r, v)| format!("{r}: {v:?}")).collect();
    parts.join(", ")
}

fn execute(cli: &Cli, stdin: &mut dyn Read) -> Result<Report, CliError> {
    let (budget, cap) = (cli.budget.max(1), cli.cap);
    let op = |t: &str, stdin: &mut dyn Read| -> Result<OpExpr, CliError> { Ok(parse_op(&input_text(t, stdin)?)?) };
    Ok(match &cli.command {
        Command::Apply { op: o, poly } => {
            let d = op(o, stdin)?;
            let f = parse_poly(&input_text(poly, stdin)?)?;
            let bound = d.support_bound(&f.vars(), f.degree().unwrap_or(0));
            Report::new(d.apply(&f).to_string()).with("support_bound", bound.to_string())
        }
        Command::Theta { r, op: o } => {
            let r = parse_poly(r)?;
            let d = op(o, stdin)?;
            Report::new(d.theta(&r).to_string())
        }
        Command::Order { op: o } => {
            let d = op(o, stdin)?;
            match analyze_ordinal_order(&d) {
                Ok(a) => Report::new(order_line(&a.verdict)).with("rule", a.rule),
                Err(e) => Report::new(e.to_string()).with("rule", "zero operator"),
            }
        }
        Command::Rorder { r, op: o } => {
            let r = parse_poly(r)?;
            let d = op(o, stdin)?;
            let a = r_order_traced(&d, &r, cap, budget);
            let mut rep = Report::new(rorder_line(&r, &a.verdict, cap));
            for t in a.trace {
                rep = rep.with("step", t);
            }
            rep
        }
        Command::Classify { op: o } => {
            let d = op(o, stdin)?;
            let c = classify_with(&d, budget, &[]);
            let line = match &c.class {
                DiffClass::StronglyDiff(n) if !c.exact => format!("strongly differential, order ≤ {n}"),
                DiffClass::QuiteDiff(a) if !c.exact => format!("quite differential, ordinal order ≤ {a}"),
                DiffClass::DiffWithoutOrdinalOrder => {
                    format!("differential, no ordinal order; {}", probe_summary(&c.probes))
                }
                other => other.to_string(),
            };
            let mut rep = Report::new(line).with("rule", c.rule);
            for (r, v) in &c.probes {
                rep = rep.with("probe", rorder_line(r, v, 2 * budget as u64 + 2));
            }
            rep
        }
        Command::BuildDalpha { alpha } => {
            let a = parse_ordinal(&input_text(alpha, stdin)?).map_err(CliError::Input)?;
            let d = build_d(&a);
            let verdict = match analyze_ordinal_order(&d) {
                Ok(x) => order_line(&x.verdict),
                Err(e) => e.to_string(),
            };
            let summary = summarize(&a, budget.min(6) as u64);
            let mut rep = Report::new(verdict).with("depth", summary.depth.to_string());
            for (addr, o, v) in &summary.blocks {
                rep = rep.with("block", format!("{addr}: order {o}, root {v}"));
            }
            rep.with("verification", verify_order_probes(&d, &a, budget.min(6)).to_string())
        }
        Command::Torsion { action } => torsion(action, budget, cap)?,
        Command::Localize { action } => match action {
            LocalizeAction::Extend { op: o, at } => {
                let d = op(o, stdin)?;
                let f = parse_poly(at)?;
                let l = match local(&d, &f, cap)? {
                    Ok(l) => l,
                    Err(rep) => return Ok(rep),
                };
                Report::new(format!("extends to R[1/({f})]; {f}-order {}", l.f_order()))
            }
            LocalizeAction::Apply { op: o, at, input } => {
                let d = op(o, stdin)?;
                let f = parse_poly(at)?;
                let l = match local(&d, &f, cap)? {
                    Ok(l) => l,
                    Err(rep) => return Ok(rep),
                };
                let v = localized_arg(input, &f)?;
                Report::new(l.apply(&v).render(&f))
            }
        },
        Command::Glue { f, g, op: o, op2, degree } => {
            let f = parse_poly(f)?;
            let g = parse_poly(g)?;
            let d1 = op(o, stdin)?;
            let d2 = match op2 {
                Some(t) => op(t, stdin)?,
                None => d1.clone(),
            };
            let (l1, l2) = match (local(&d1, &f, cap)?, local(&d2, &g, cap)?) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(rep), _) | (_, Err(rep)) => return Ok(rep),
            };
            let r = match glue(&l1, &l2, *degree) {
                Ok(r) => r,
                Err(e @ LocalizeError::NotCompatible(_)) => return Ok(Report::new(format!("no gluing: {e}"))),
                Err(e) => return Err(CliError::Input(e.to_string())),
            };
            let verdict = match &r.operator {
                Some(w) => format!("glued operator {w}"),
                None => "glued values do not determine a finite operator".to_string(),
            };
            let mut rep = Report::new(verdict);
            for (u, v) in &r.table {
                rep = rep.with("value", format!("{u} ↦ {v}"));
            }
            rep
        }
        Command::Colocal { action: ColocalAction::Hom { f } } => {
            let f = parse_poly(f)?;
            Report::new(hom_vanishing(&f).map_err(|e| CliError::Input(e.to_string()))?.to_string())
        }
    })
}

fn torsion(action: &TorsionAction, budget: usize, cap: u64) -> Result<Report, CliError> {
    let err = |e: crate::torsion::TorsionError| CliError::Input(e.to_string());
    Ok(match action {
        TorsionAction::Classify { preset: p } => {
            let setup = preset(p)?;
            let rep = module_report(&setup, budget);
            let mut out = Report::new(rep.class.to_string()).with("preset", setup.name.clone());
            for (g, r) in rep.ranks {
                out = out.with("rank", format!("{g}: {r}"));
            }
            out
        }
        TorsionAction::Rank { preset: p, element } => {
            let setup = preset(p)?;
            Report::new(quite_rank(&monomial_arg(element)?, &setup).map_err(err)?.to_string())
        }
        TorsionAction::StrongLevel { preset: p, element } => {
            let setup = preset(p)?;
            Report::new(strong_level(&monomial_arg(element)?, &setup, cap).map_err(err)?.to_string())
        }
        TorsionAction::IsTorsion { preset: p, element } => {
            let setup = preset(p)?;
            let v = is_torsion_element(&monomial_arg(element)?, &setup, cap).map_err(err)?;
            Report::new(match v {
                TorsionVerdict::Torsion => "I-torsion element".to_string(),
                TorsionVerdict::NotTorsion(s) => format!("not I-torsion; powers of {s} never vanish"),
                TorsionVerdict::Unknown(c) => format!("unknown (cap {c})"),
            })
        }
    })
}

fn render(cli: &Cli, rep: &Report, elapsed_us: u128) -> String {
    let mut out = String::new();
    match cli.format {
        Format::Plain => {
            out.push_str(&rep.verdict);
            out.push('\n');
            for (k, v) in &rep.details {
                let _ = writeln!(out, "  {k}: {v}");
            }
        }
        Format::Record => {
            let _ = writeln!(out, "verdict: {}", rep.verdict);
            for (k, v) in &rep.details {
                let _ = writeln!(out, "{k}: {v}");
            }
            let _ = writeln!(out, "elapsed_us: {elapsed_us}");
            out = out.replace('ω', "w");
        }
    }
    out
}

/// Runs the command line, returning the output text and the exit status.
pub fn run<I, T>(args: I, stdin: &mut dyn Read) -> (String, i32)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => return (e.render().to_string(), e.exit_code()),
    };
    let start = Instant::now();
    // deep constructions can outgrow the variable space; report that as an input error
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli, stdin)))
        .unwrap_or_else(|_| Err(CliError::Input("input exceeds internal limits".into())));
    match outcome {
        Ok(rep) => (render(&cli, &rep, start.elapsed().as_micros()), 0),
        Err(e) => {
            let text = match cli.format {
                Format::Plain => format!("error: {e}\n"),
                Format::Record => format!("error: {e}\n").replace('ω', "w"),
            };
            (text, 2)
        }
    }
}
