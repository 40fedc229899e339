//! Torsion classes of cyclic monomial quotients `T/J` (and of monomial
//! submodules of them) with respect to an ideal `I` generated by variables
//! and finitely many extra monomials.
//!
//! Variables above the horizon of `J` that do not occur in the element at
//! hand are *fresh*; within one residue class modulo the period of `J` they
//! all behave alike up to the affine growth of their thresholds. Ranks over a
//! fresh class are read off a window of samples and accepted only when they
//! fit a closed form.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ordinal::Ordinal;
use crate::ring::{ideal_member, IdealFamily, Monomial, MonomialIdealSpec, Variable};

const MAX_DEPTH: usize = 96;
const WINDOW: u64 = 4;
pub const DEFAULT_ADVERSARY_LENGTH: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TorsionError {
    #[error("{0} is zero in the module")]
    ZeroElement(Monomial),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Variables `x_i`, `from ≤ i ≤ to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarRange {
    pub from: u64,
    pub to: Option<u64>,
}

impl VarRange {
    pub fn contains(&self, i: u64) -> bool {
        i >= self.from && self.to.is_none_or(|t| i <= t)
    }
}

/// Generators: a range of variables plus finitely many monomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub vars: Option<VarRange>,
    pub extra: Vec<Monomial>,
}

impl GeneratorSpec {
    pub fn variables(from: u64, to: Option<u64>) -> Self {
        GeneratorSpec { vars: Some(VarRange { from, to }), extra: Vec::new() }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(r) = &self.vars {
            parts.push(match r.to {
                Some(t) if t == r.from => format!("x{t}"),
                Some(t) => format!("x{}..x{t}", r.from),
                None => format!("x{}, x{}, …", r.from, r.from + 1),
            });
        }
        parts.extend(self.extra.iter().map(|m| m.to_string()));
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorsionSetup {
    pub name: String,
    /// Generators of `I`.
    pub ideal: GeneratorSpec,
    /// Relations `J`.
    pub relations: MonomialIdealSpec,
    /// Generators of the submodule of `T/J` under study; `None` for `T/J`.
    pub module: Option<GeneratorSpec>,
}

pub const PRESETS: [&str; 5] = ["hrbek", "hrbek-ideal", "hrbek-quotient", "staircase", "squares"];

impl TorsionSetup {
    pub fn new(name: &str, ideal: GeneratorSpec, relations: MonomialIdealSpec) -> Self {
        TorsionSetup { name: name.to_string(), ideal, relations, module: None }
    }

    /// `T/J` with `J = (x_i^{i+1}, x_i x_j)` and `I = (x_1, x_2, …)`.
    pub fn hrbek() -> Self {
        Self::new("hrbek", GeneratorSpec::variables(1, None), MonomialIdealSpec::hrbek())
    }

    /// The image of `I` inside the Hrbek quotient.
    pub fn hrbek_ideal() -> Self {
        TorsionSetup { name: "hrbek-ideal".into(), module: Some(GeneratorSpec::variables(1, None)), ..Self::hrbek() }
    }

    /// `T/I` for the Hrbek data.
    pub fn hrbek_quotient() -> Self {
        let mut j = MonomialIdealSpec::hrbek();
        j.families.push(IdealFamily::pure_powers(0, 1, 0, 1, 1));
        Self::new("hrbek-quotient", GeneratorSpec::variables(1, None), j)
    }

    pub fn staircase() -> Self {
        Self::new("staircase", GeneratorSpec::variables(1, None), MonomialIdealSpec::staircase())
    }

    pub fn squares() -> Self {
        Self::new("squares", GeneratorSpec::variables(1, None), MonomialIdealSpec::squares())
    }

    pub fn preset(name: &str) -> Result<Self, TorsionError> {
        Ok(match name {
            "hrbek" => Self::hrbek(),
            "hrbek-ideal" => Self::hrbek_ideal(),
            "hrbek-quotient" => Self::hrbek_quotient(),
            "staircase" => Self::staircase(),
            "squares" => Self::squares(),
            other => return Err(TorsionError::UnknownPreset(other.to_string())),
        })
    }

    pub fn is_zero(&self, m: &Monomial) -> bool {
        ideal_member(m, &self.relations)
    }

    /// Whether `m` lies in the submodule under study (and is nonzero).
    pub fn in_module(&self, m: &Monomial) -> bool {
        if self.is_zero(m) {
            return false;
        }
        match &self.module {
            None => true,
            Some(g) => {
                g.vars.as_ref().is_some_and(|r| m.vars().any(|v| r.contains(v.0)))
                    || g.extra.iter().any(|e| e.divides(m))
            }
        }
    }

    fn max_extra_exponent(&self) -> u32 {
        self.relations
            .finite_generators
            .iter()
            .flat_map(|g| g.exponents().iter().map(|&(_, e)| e))
            .max()
            .unwrap_or(0)
    }

    /// Largest index that is not fresh for `m`.
    fn horizon_for(&self, m: &Monomial) -> u64 {
        let mv = m.vars().map(|v| v.0).max().unwrap_or(0);
        let ev = self.ideal.extra.iter().flat_map(|e| e.vars()).map(|v| v.0).max().unwrap_or(0);
        let from = self.ideal.vars.as_ref().map_or(0, |r| r.from.saturating_sub(1));
        self.relations.horizon().max(mv).max(ev).max(from)
    }

    /// Generators that are not fresh for `m`.
    fn relevant_generators(&self, m: &Monomial) -> Vec<Monomial> {
        let h = self.horizon_for(m);
        let mut out: Vec<Monomial> = Vec::new();
        if let Some(r) = &self.ideal.vars {
            let hi = r.to.map_or(h, |t| t.min(h.max(t)));
            for i in r.from..=hi {
                if r.contains(i) {
                    out.push(Monomial::var(Variable::x(i)));
                }
            }
        }
        out.extend(self.ideal.extra.iter().cloned());
        out
    }

    /// First `count` fresh variables in each residue class modulo the period.
    fn fresh_classes(&self, m: &Monomial, count: u64) -> Vec<Vec<Variable>> {
        let Some(r) = &self.ideal.vars else { return Vec::new() };
        let h = self.horizon_for(m);
        if r.to.is_some_and(|t| t <= h) {
            return Vec::new();
        }
        let p = self.relations.period().max(1);
        (0..p)
            .map(|c| {
                (h + 1..=r.to.unwrap_or(h + p * count))
                    .filter(|i| i % p == c && r.contains(*i))
                    .take(count as usize)
                    .map(Variable::x)
                    .collect::<Vec<_>>()
            })
            .filter(|v: &Vec<Variable>| v.len() as u64 == count)
            .collect()
    }

    /// Greedy sequence of distinct variable generators keeping `m` nonzero.
    fn distinct_sequence(&self, m: &Monomial, len: usize) -> Vec<Monomial> {
        let Some(r) = &self.ideal.vars else { return Vec::new() };
        let mut cur = m.clone();
        let mut out = Vec::new();
        let mut i = r.from;
        let limit = r.from + 4 * len as u64 + self.horizon_for(m) + 8;
        while out.len() < len && r.contains(i) && i <= limit {
            let v = Variable::x(i);
            let next = cur.mul(&Monomial::var(v));
            if cur.exponent(v) == 0 && !self.is_zero(&next) {
                out.push(Monomial::var(v));
                cur = next;
            }
            i += 1;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RankVerdict {
    Rank(Ordinal),
    /// The first generators of a sequence whose products never vanish.
    NoRank(Vec<Monomial>),
    Unknown,
}

pub fn render_sequence(seq: &[Monomial]) -> String {
    let s: Vec<String> = seq.iter().map(Monomial::to_string).collect();
    format!("{},…", s.join(","))
}

impl fmt::Display for RankVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankVerdict::Rank(a) => write!(f, "rank {a}"),
            RankVerdict::NoRank(seq) => write!(f, "no rank; witness sequence {}", render_sequence(seq)),
            RankVerdict::Unknown => f.write_str("unknown"),
        }
    }
}

/// Memoized rank computation for one setup.
pub struct RankTable<'a> {
    setup: &'a TorsionSetup,
    memo: HashMap<Monomial, RankVerdict>,
}

impl<'a> RankTable<'a> {
    pub fn new(setup: &'a TorsionSetup) -> Self {
        RankTable { setup, memo: HashMap::new() }
    }

    pub fn rank(&mut self, m: &Monomial) -> Result<RankVerdict, TorsionError> {
        if self.setup.is_zero(m) {
            return Err(TorsionError::ZeroElement(m.clone()));
        }
        Ok(self.rank_at(m, 0))
    }

    fn rank_at(&mut self, m: &Monomial, depth: usize) -> RankVerdict {
        if let Some(v) = self.memo.get(m) {
            return v.clone();
        }
        if depth > MAX_DEPTH {
            return RankVerdict::Unknown;
        }
        let v = self.compute(m, depth);
        self.memo.insert(m.clone(), v.clone());
        v
    }

    fn compute(&mut self, m: &Monomial, depth: usize) -> RankVerdict {
        let setup = self.setup;
        if let Some(seq) = self.non_terminating(m) {
            return RankVerdict::NoRank(seq);
        }
        let mut best = Ordinal::zero();
        let mut unknown = false;
        for s in setup.relevant_generators(m) {
            let sm = m.mul(&s);
            if setup.is_zero(&sm) {
                continue;
            }
            match self.rank_at(&sm, depth + 1) {
                RankVerdict::Rank(a) => best = best.max(a.succ()),
                RankVerdict::NoRank(seq) => {
                    return RankVerdict::NoRank(std::iter::once(s).chain(seq).take(3).collect());
                }
                RankVerdict::Unknown => unknown = true,
            }
        }
        for class in setup.fresh_classes(m, WINDOW) {
            let mut samples = Vec::new();
            for &w in &class {
                let sm = m.mul(&Monomial::var(w));
                if setup.is_zero(&sm) {
                    break;
                }
                samples.push(self.rank_at(&sm, depth + 1));
            }
            if samples.is_empty() {
                continue;
            }
            if samples.len() < class.len() {
                // kill status must not depend on the sample
                unknown = true;
                continue;
            }
            match fit_supremum(&samples) {
                Some(a) => best = best.max(a),
                None => unknown = true,
            }
        }
        if unknown { RankVerdict::Unknown } else { RankVerdict::Rank(best) }
    }

    /// Certificates for sequences of generators that never kill `m`.
    fn non_terminating(&self, m: &Monomial) -> Option<Vec<Monomial>> {
        let setup = self.setup;
        let n = setup.max_extra_exponent() + 1;
        // a single generator none of whose powers kill m
        let constant = |s: &Monomial| {
            s.vars().all(|v| setup.relations.threshold(v).is_none()) && {
                let sn = (0..n).fold(m.clone(), |acc, _| acc.mul(s));
                !setup.is_zero(&sn)
            }
        };
        for s in setup.relevant_generators(m) {
            if constant(&s) {
                return Some(vec![s.clone(), s.clone(), s]);
            }
        }
        for class in setup.fresh_classes(m, 2) {
            let (w0, w1) = (class[0], class[1]);
            let once = m.mul(&Monomial::var(w0));
            if setup.is_zero(&once) {
                continue;
            }
            let s = Monomial::var(w0);
            if constant(&s) {
                return Some(vec![s.clone(), s.clone(), s]);
            }
            // distinct fresh variables multiply freely
            if !setup.is_zero(&once.mul(&Monomial::var(w1))) {
                return Some(setup.distinct_sequence(m, 3));
            }
        }
        None
    }
}

/// `sup (ρ + 1)` over a fresh class, from a window of sampled ranks.
fn fit_supremum(samples: &[RankVerdict]) -> Option<Ordinal> {
    let ranks: Option<Vec<&Ordinal>> = samples
        .iter()
        .map(|s| match s {
            RankVerdict::Rank(a) => Some(a),
            _ => None,
        })
        .collect();
    let ranks = ranks?;
    if ranks.windows(2).all(|w| w[0] == w[1]) {
        return Some(ranks[0].succ());
    }
    let split: Vec<(Ordinal, u64)> = ranks.iter().map(|a| a.split_finite()).collect();
    let base = &split[0].0;
    let diffs: Vec<i128> = split.windows(2).map(|w| w[1].1 as i128 - w[0].1 as i128).collect();
    if split.iter().all(|(b, _)| b == base) && diffs[0] > 0 && diffs.iter().all(|d| *d == diffs[0]) {
        return Some(base.add(&Ordinal::omega()));
    }
    None
}

pub fn quite_rank(m: &Monomial, setup: &TorsionSetup) -> Result<RankVerdict, TorsionError> {
    RankTable::new(setup).rank(m)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrongVerdict {
    Level(u64),
    NotStrong,
    Unknown(u64),
}

impl fmt::Display for StrongVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrongVerdict::Level(n) => write!(f, "level {n}"),
            StrongVerdict::NotStrong => f.write_str("not strongly torsion"),
            StrongVerdict::Unknown(cap) => write!(f, "unknown (cap {cap})"),
        }
    }
}

/// Least `n` with `I^{n+1} m = 0`: the longest chain of generators keeping
/// `m` nonzero, which is the rank whenever that is finite.
pub fn strong_level(m: &Monomial, setup: &TorsionSetup, cap: u64) -> Result<StrongVerdict, TorsionError> {
    Ok(match quite_rank(m, setup)? {
        RankVerdict::Rank(a) => match a.as_finite() {
            Some(n) if n <= cap => StrongVerdict::Level(n),
            Some(_) => StrongVerdict::Unknown(cap),
            None => StrongVerdict::NotStrong,
        },
        RankVerdict::NoRank(_) => StrongVerdict::NotStrong,
        RankVerdict::Unknown => StrongVerdict::Unknown(cap),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TorsionVerdict {
    Torsion,
    NotTorsion(Monomial),
    Unknown(u64),
}

/// Least `k ≥ 1` with `s^k m = 0`, searched up to `cap`.
fn kill_exponent(setup: &TorsionSetup, m: &Monomial, s: &Monomial, cap: u64) -> Option<u64> {
    let mut cur = m.clone();
    for k in 1..=cap {
        cur = cur.mul(s);
        if setup.is_zero(&cur) {
            return Some(k);
        }
    }
    None
}

/// Every generator acts nilpotently on `m`.
pub fn is_torsion_element(m: &Monomial, setup: &TorsionSetup, cap: u64) -> Result<TorsionVerdict, TorsionError> {
    if setup.is_zero(m) {
        return Err(TorsionError::ZeroElement(m.clone()));
    }
    let mut gens = setup.relevant_generators(m);
    gens.extend(setup.fresh_classes(m, 1).into_iter().map(|c| Monomial::var(c[0])));
    let n = setup.max_extra_exponent() as u64 + 1;
    let mut unknown = false;
    for s in gens {
        // closed form: the smallest threshold among the generator's variables
        let by_threshold = s
            .exponents()
            .iter()
            .filter_map(|&(v, e)| setup.relations.threshold(v).map(|th| (th.saturating_sub(m.exponent(v)) as u64).div_ceil(e as u64)))
            .min();
        let bound = by_threshold.unwrap_or(n).max(1).min(cap.max(1));
        if kill_exponent(setup, m, &s, bound).is_some() {
            continue;
        }
        if by_threshold.is_none() {
            return Ok(TorsionVerdict::NotTorsion(s));
        }
        unknown = true;
    }
    Ok(if unknown { TorsionVerdict::Unknown(cap) } else { TorsionVerdict::Torsion })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Constant,
    Distinct,
    Greedy,
}

pub const STRATEGIES: [Strategy; 3] = [Strategy::Constant, Strategy::Distinct, Strategy::Greedy];

/// Plays generators against `m`, stopping at the first zero product. The
/// returned sequence ends with the killing generator when one was found.
pub fn adversary(setup: &TorsionSetup, m: &Monomial, strategy: Strategy, len: usize) -> (Vec<Monomial>, bool) {
    let mut cur = m.clone();
    let mut seq: Vec<Monomial> = Vec::new();
    let mut table = RankTable::new(setup);
    for _ in 0..len {
        let mut candidates = setup.relevant_generators(&cur);
        candidates.extend(setup.fresh_classes(&cur, 2).into_iter().flatten().map(Monomial::var));
        let survivors: Vec<&Monomial> = candidates.iter().filter(|s| !setup.is_zero(&cur.mul(s))).collect();
        let pick = match strategy {
            Strategy::Constant => seq.first().cloned().or_else(|| survivors.first().map(|s| (*s).clone())),
            Strategy::Distinct => survivors.iter().find(|s| !seq.contains(s)).map(|s| (*s).clone()),
            Strategy::Greedy => survivors
                .iter()
                .max_by_key(|s| match table.rank_at(&cur.mul(s), 0) {
                    RankVerdict::Rank(a) => (1, a),
                    RankVerdict::NoRank(_) => (2, Ordinal::zero()),
                    RankVerdict::Unknown => (0, Ordinal::zero()),
                })
                .map(|s| (*s).clone()),
        };
        let Some(s) = pick.or_else(|| candidates.first().cloned()) else { return (seq, false) };
        cur = cur.mul(&s);
        seq.push(s);
        if setup.is_zero(&cur) {
            return (seq, true);
        }
    }
    (seq, false)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TorsionClass {
    Strong,
    /// Length of the filtration: the least ordinal above every rank.
    Quite(Ordinal),
    TorsionOnly(Vec<Monomial>),
    /// An element and a generator acting on it without nilpotence.
    NotTorsion(Monomial, Monomial),
    Unknown,
}

impl fmt::Display for TorsionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TorsionClass::Strong => f.write_str("strongly I-torsion"),
            TorsionClass::Quite(a) => write!(f, "quite I-torsion, not strongly; filtration length {a}"),
            TorsionClass::TorsionOnly(seq) => {
                write!(f, "I-torsion but not quite; witness sequence {}", render_sequence(seq))
            }
            TorsionClass::NotTorsion(m, s) => write!(f, "not I-torsion; {s} acts on {m} without nilpotence"),
            TorsionClass::Unknown => f.write_str("unknown"),
        }
    }
}

/// Classification with the per-generator ranks behind it.
#[derive(Clone, Debug)]
pub struct ModuleReport {
    pub class: TorsionClass,
    pub ranks: Vec<(Monomial, RankVerdict)>,
}

/// Module generators to rank: `1` for `T/J`, otherwise the relevant
/// generators and a window from each fresh class.
fn module_generators(setup: &TorsionSetup) -> (Vec<Monomial>, Vec<Vec<Monomial>>) {
    match &setup.module {
        None => (vec![Monomial::one()], Vec::new()),
        Some(g) => {
            let probe = TorsionSetup { ideal: g.clone(), ..setup.clone() };
            let one = Monomial::one();
            let fixed = probe.relevant_generators(&one).into_iter().filter(|m| !setup.is_zero(m)).collect();
            let classes = probe
                .fresh_classes(&one, WINDOW)
                .into_iter()
                .map(|c| c.into_iter().map(Monomial::var).collect())
                .collect();
            (fixed, classes)
        }
    }
}

pub fn classify_module(setup: &TorsionSetup, budget: usize) -> TorsionClass {
    module_report(setup, budget).class
}

pub fn module_report(setup: &TorsionSetup, budget: usize) -> ModuleReport {
    let mut table = RankTable::new(setup);
    let (fixed, classes) = module_generators(setup);
    let mut ranks: Vec<(Monomial, RankVerdict)> = Vec::new();
    let mut length = Ordinal::zero();
    let mut unknown = false;
    for g in fixed.iter().filter(|g| !setup.is_zero(g)) {
        ranks.push((g.clone(), table.rank_at(g, 0)));
    }
    for class in &classes {
        let rs: Vec<RankVerdict> = class.iter().map(|g| table.rank_at(g, 0)).collect();
        if rs.iter().all(|r| matches!(r, RankVerdict::Rank(_))) {
            // the class contributes the supremum of its closed form
            match fit_supremum(&rs) {
                Some(a) => length = length.max(a),
                None => unknown = true,
            }
        }
        ranks.extend(class.iter().cloned().zip(rs));
    }
    let mut all_finite = true;
    let mut no_rank: Option<(Monomial, Vec<Monomial>)> = None;
    for (g, r) in &ranks {
        match r {
            RankVerdict::Rank(a) => {
                all_finite &= a.is_finite();
                length = length.max(a.succ());
            }
            RankVerdict::NoRank(seq) => {
                no_rank.get_or_insert_with(|| (g.clone(), seq.clone()));
            }
            RankVerdict::Unknown => unknown = true,
        }
    }
    let class = if let Some((g, seq)) = no_rank {
        torsion_only_or_not(setup, &g, seq, budget)
    } else if unknown {
        TorsionClass::Unknown
    } else if all_finite {
        TorsionClass::Strong
    } else {
        TorsionClass::Quite(length)
    };
    ModuleReport { class, ranks }
}

fn torsion_only_or_not(setup: &TorsionSetup, g: &Monomial, seq: Vec<Monomial>, budget: usize) -> TorsionClass {
    match is_torsion_element(g, setup, 4 * budget as u64 + 4) {
        Ok(TorsionVerdict::NotTorsion(s)) => TorsionClass::NotTorsion(g.clone(), s),
        Ok(TorsionVerdict::Torsion) => {
            // elements of the module are combinations of multiples of its
            // generators, so sampling the generators' fresh classes suffices
            let (fixed, classes) = module_generators(setup);
            for h in fixed.iter().chain(classes.iter().flatten()) {
                if let Ok(TorsionVerdict::NotTorsion(s)) = is_torsion_element(h, setup, 4 * budget as u64 + 4) {
                    return TorsionClass::NotTorsion(h.clone(), s);
                }
            }
            let (witness, killed) = adversary(setup, g, Strategy::Distinct, budget.max(3));
            if killed || witness.len() < 3 { TorsionClass::TorsionOnly(seq) } else { TorsionClass::TorsionOnly(witness[..3].to_vec()) }
        }
        _ => TorsionClass::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: u64) -> Monomial {
        Monomial::var(Variable::x(i))
    }

    fn xp(i: u64, e: u32) -> Monomial {
        Monomial::var_pow(Variable::x(i), e)
    }

    #[test]
    fn ranks() {
        let h = TorsionSetup::hrbek();
        assert_eq!(quite_rank(&x(3), &h), Ok(RankVerdict::Rank(Ordinal::finite(2))));
        assert_eq!(quite_rank(&Monomial::one(), &h), Ok(RankVerdict::Rank(Ordinal::omega())));
        let sq = TorsionSetup::squares();
        assert_eq!(quite_rank(&Monomial::one(), &sq), Ok(RankVerdict::NoRank(vec![x(1), x(2), x(3)])));
        assert_eq!(quite_rank(&xp(2, 3), &h), Err(TorsionError::ZeroElement(xp(2, 3))));
    }

    #[test]
    fn strong_levels() {
        let h = TorsionSetup::hrbek();
        assert_eq!(strong_level(&xp(2, 2), &h, 12), Ok(StrongVerdict::Level(0)));
        assert_eq!(strong_level(&Monomial::one(), &h, 12), Ok(StrongVerdict::NotStrong));
        assert_eq!(strong_level(&x(3), &h, 12), Ok(StrongVerdict::Level(2)));
    }

    #[test]
    fn torsion_elements() {
        assert_eq!(is_torsion_element(&Monomial::one(), &TorsionSetup::squares(), 12), Ok(TorsionVerdict::Torsion));
        let free = TorsionSetup::new("free", GeneratorSpec::variables(1, Some(1)), MonomialIdealSpec::zero());
        assert_eq!(is_torsion_element(&Monomial::one(), &free, 12), Ok(TorsionVerdict::NotTorsion(x(1))));
        assert_eq!(is_torsion_element(&x(5), &TorsionSetup::hrbek(), 12), Ok(TorsionVerdict::Torsion));
    }

    #[test]
    fn module_classes() {
        assert_eq!(classify_module(&TorsionSetup::hrbek(), 8), TorsionClass::Quite(Ordinal::omega().succ()));
        assert_eq!(classify_module(&TorsionSetup::squares(), 8), TorsionClass::TorsionOnly(vec![x(1), x(2), x(3)]));
        assert_eq!(classify_module(&TorsionSetup::hrbek_quotient(), 8), TorsionClass::Strong);
        assert_eq!(classify_module(&TorsionSetup::hrbek_ideal(), 8), TorsionClass::Strong);
        assert_eq!(classify_module(&TorsionSetup::staircase(), 8), TorsionClass::TorsionOnly(vec![x(2), x(3), x(4)]));
        let free = TorsionSetup::new("free", GeneratorSpec::variables(1, Some(1)), MonomialIdealSpec::zero());
        assert_eq!(classify_module(&free, 8), TorsionClass::NotTorsion(Monomial::one(), x(1)));
    }

    #[test]
    fn adversaries_die_on_quite_modules() {
        let h = TorsionSetup::hrbek();
        for s in STRATEGIES {
            let (seq, killed) = adversary(&h, &Monomial::one(), s, DEFAULT_ADVERSARY_LENGTH);
            assert!(killed, "{s:?}: {seq:?}");
        }
        let (_, killed) = adversary(&TorsionSetup::squares(), &Monomial::one(), Strategy::Distinct, 16);
        assert!(!killed);
    }
}
