//! Orders of operators: r-orders via repeated commutators, ordinal orders
//! via structural rules, and the resulting classification.

use std::fmt;

use num::Zero;
use thiserror::Error;

use crate::ordinal::Ordinal;
use crate::ring::{Poly, Variable};
use crate::stream::{DerivPattern, OpExpr, ZeroVerdict};
use crate::Rational;

pub const DEFAULT_BUDGET: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderError {
    #[error("the operator is zero")]
    ZeroOperator,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderVerdict {
    Exact(u64),
    /// The chain did not settle; the order is at least this value.
    AtLeast(u64),
    InfiniteCertified(String),
}

/// Verdict together with the commutator chain that produced it.
#[derive(Clone, Debug)]
pub struct OrderAnalysis {
    pub verdict: OrderVerdict,
    pub trace: Vec<String>,
}

pub fn r_order(d: &OpExpr, r: &Poly, cap: u64) -> OrderVerdict {
    r_order_traced(d, r, cap, DEFAULT_BUDGET).verdict
}

/// Iterates `θ_r` up to `cap` times, testing each step for zero.
pub fn r_order_traced(d: &OpExpr, r: &Poly, cap: u64, budget: usize) -> OrderAnalysis {
    let mut trace = Vec::new();
    let mut chain: Vec<OpExpr> = Vec::new();
    let mut cur = d.clone();
    // largest n with θ^n(D) known to be nonzero
    let mut last_nonzero: Option<u64> = None;
    for n in 0..=cap {
        let verdict = cur.zero_test(budget);
        let label = if n == 0 { "D".to_string() } else { format!("θ^{n}") };
        match &verdict {
            ZeroVerdict::Zero(cert) => {
                trace.push(format!("{label} = 0 ({cert})"));
                let v = match (n, last_nonzero) {
                    (0, _) => OrderVerdict::Exact(0),
                    (n, Some(k)) if k + 1 == n => OrderVerdict::Exact(k),
                    (_, k) => OrderVerdict::AtLeast(k.unwrap_or(0)),
                };
                return OrderAnalysis { verdict: v, trace };
            }
            ZeroVerdict::NonZero(w) => {
                trace.push(format!("{label} = {} ≠ 0 (on {w})", short(&cur)));
                last_nonzero = Some(n);
            }
            ZeroVerdict::Unknown(_) => trace.push(format!("{label} = {} undecided", short(&cur))),
        }
        if n == cap {
            break;
        }
        let next = cur.theta(r);
        if verdict.is_nonzero() {
            // θ^{n+1} = λ θ^k with every θ^k..θ^n nonzero repeats forever
            let all_nonzero = last_nonzero == Some(n);
            for (k, prev) in chain.iter().chain(std::iter::once(&cur)).enumerate() {
                if let Some(lambda) = next.scalar_ratio(prev) {
                    if !lambda.is_zero() && all_nonzero && chain_nonzero_from(&trace, k) {
                        let cert = format!("θ^{} = {} · θ^{k}", n + 1, crate::ring::fmt_rational(&lambda));
                        trace.push(cert.clone());
                        return OrderAnalysis { verdict: OrderVerdict::InfiniteCertified(cert), trace };
                    }
                }
            }
        }
        chain.push(cur);
        cur = next;
    }
    OrderAnalysis { verdict: OrderVerdict::AtLeast(last_nonzero.unwrap_or(0).max(cap.min(chain.len() as u64))), trace }
}

fn chain_nonzero_from(trace: &[String], k: usize) -> bool {
    trace.iter().skip(k).all(|t| t.contains('≠'))
}

fn short(d: &OpExpr) -> String {
    let s = d.to_string();
    if s.chars().count() > 80 {
        format!("{}…", s.chars().take(79).collect::<String>())
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrdinalOrderVerdict {
    Exact(Ordinal),
    UpperBound(Ordinal),
    /// Carries a description of the witness sequence.
    NoOrdinalOrder(String),
    Unknown,
}

impl OrdinalOrderVerdict {
    pub fn value(&self) -> Option<&Ordinal> {
        match self {
            OrdinalOrderVerdict::Exact(a) | OrdinalOrderVerdict::UpperBound(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OrdinalAnalysis {
    pub verdict: OrdinalOrderVerdict,
    /// Structural rule applied at the root.
    pub rule: String,
}

pub fn ordinal_order(d: &OpExpr) -> Result<OrdinalOrderVerdict, OrderError> {
    analyze_ordinal_order(d).map(|a| a.verdict)
}

pub fn analyze_ordinal_order(d: &OpExpr) -> Result<OrdinalAnalysis, OrderError> {
    match structural(d) {
        Node::Zero => Err(OrderError::ZeroOperator),
        Node::Ord(verdict, rule) => Ok(OrdinalAnalysis { verdict, rule }),
    }
}

enum Node {
    Zero,
    Ord(OrdinalOrderVerdict, String),
}

fn exact(a: Ordinal, rule: impl Into<String>) -> Node {
    Node::Ord(OrdinalOrderVerdict::Exact(a), rule.into())
}

fn structural(d: &OpExpr) -> Node {
    use OrdinalOrderVerdict::*;
    if d.is_structurally_zero() {
        return Node::Zero;
    }
    match d {
        OpExpr::Finite(op) => {
            let n = op.finite_order().expect("nonzero operator");
            exact(Ordinal::finite(n as u64), "finite operator: largest derivative degree")
        }
        OpExpr::Scale(_, inner) => structural(inner),
        OpExpr::Family(fam) => match &fam.pattern {
            DerivPattern::SingleVar { a, b, .. } => {
                if *a == 0 {
                    exact(Ordinal::finite(*b as u64), "family of fixed derivative degree on distinct variables")
                } else {
                    exact(Ordinal::omega(), "unbounded derivative degrees on distinct variables")
                }
            }
            DerivPattern::FixedVar { v, .. } => Node::Ord(
                NoOrdinalOrder(format!("θ_{v}^n ≠ 0 for every n")),
                "unbounded derivative degrees in a single variable".into(),
            ),
            DerivPattern::Prefix { skip } => {
                let seq: Vec<String> =
                    (1u64..).filter(|j| !skip.contains(j)).take(3).map(|j| Variable::x(j).to_string()).collect();
                Node::Ord(
                    NoOrdinalOrder(format!("{},…", seq.join(","))),
                    "products of ever more derivatives: each x_j has order 1, no uniform bound".into(),
                )
            }
        },
        OpExpr::TensorDer { inner, n, .. } => match structural(inner) {
            Node::Zero => Node::Zero,
            Node::Ord(v, _) => {
                let n = Ordinal::finite(*n as u64);
                let v = match v {
                    Exact(b) => Exact(b.add(&n)),
                    UpperBound(b) => UpperBound(b.add(&n)),
                    other => other,
                };
                Node::Ord(v, "fresh derivative factor adds its degree".into())
            }
        },
        OpExpr::Limit(l) => exact(
            l.generator().supremum(),
            "disjoint blocks whose orders are cofinal below a limit ordinal",
        ),
        OpExpr::Sum(parts) => sum_rule(parts),
        OpExpr::Compose(a, b) => compose_rule(a, b),
        OpExpr::Lazy(_) | OpExpr::Commutator { .. } => {
            Node::Ord(Unknown, "transformed family without closed form".into())
        }
    }
}

fn sum_rule(parts: &[OpExpr]) -> Node {
    use OrdinalOrderVerdict::*;
    let mut verdicts = Vec::new();
    for p in parts {
        match structural(p) {
            Node::Zero => {}
            Node::Ord(v, _) => verdicts.push((p, v)),
        }
    }
    if verdicts.is_empty() {
        return Node::Zero;
    }
    let without: Vec<&(&OpExpr, OrdinalOrderVerdict)> =
        verdicts.iter().filter(|(_, v)| matches!(v, NoOrdinalOrder(_))).collect();
    if verdicts.iter().any(|(_, v)| *v == Unknown) {
        return Node::Ord(Unknown, "sum with an undetermined summand".into());
    }
    if !without.is_empty() {
        if without.len() == 1 {
            // the rest has an ordinal order, so the difference would too
            return Node::Ord(without[0].1.clone(), "sum of one operator without ordinal order and others with".into());
        }
        return Node::Ord(Unknown, "sum of several operators without ordinal order".into());
    }
    let max = verdicts.iter().filter_map(|(_, v)| v.value()).max().unwrap().clone();
    let top: Vec<&(&OpExpr, OrdinalOrderVerdict)> =
        verdicts.iter().filter(|(_, v)| v.value() == Some(&max)).collect();
    let all_exact = top.iter().all(|(_, v)| matches!(v, Exact(_)));
    if all_exact && top.len() == 1 {
        return exact(max, "unique summand of largest order");
    }
    let disjoint = verdicts.iter().enumerate().all(|(i, (p, _))| {
        verdicts[i + 1..].iter().all(|(q, _)| p.support().disjoint(&q.support()))
    });
    if all_exact && disjoint {
        return exact(max, "variable-disjoint nonzero summands");
    }
    Node::Ord(UpperBound(max), "sum: largest summand order".into())
}

fn compose_rule(a: &OpExpr, b: &OpExpr) -> Node {
    use OrdinalOrderVerdict::*;
    let (va, vb) = match (structural(a), structural(b)) {
        (Node::Zero, _) | (_, Node::Zero) => return Node::Zero,
        (Node::Ord(x, _), Node::Ord(y, _)) => (x, y),
    };
    let (g, d) = match (va.value(), vb.value()) {
        (Some(g), Some(d)) => (g.clone(), d.clone()),
        _ => return Node::Ord(Unknown, "composition with a factor of unknown order".into()),
    };
    let both_exact = matches!(va, Exact(_)) && matches!(vb, Exact(_));
    if both_exact && a.support().disjoint(&b.support()) {
        return exact(g.natural_sum(&d), "variable-disjoint factors: natural sum of orders");
    }
    if let (Some(m), Some(n)) = (g.as_finite(), d.as_finite()) {
        return Node::Ord(UpperBound(Ordinal::finite(m + n)), "composition of finite orders".into());
    }
    Node::Ord(UpperBound(Ordinal::composition_bound(&g, &d)), "composition bound".into())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiffClass {
    StronglyDiff(u64),
    QuiteDiff(Ordinal),
    DiffWithoutOrdinalOrder,
    NotDifferential(Poly),
    Unknown,
}

impl fmt::Display for DiffClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffClass::StronglyDiff(n) => write!(f, "strongly differential, order {n}"),
            DiffClass::QuiteDiff(a) => write!(f, "quite differential, ordinal order {a}"),
            DiffClass::DiffWithoutOrdinalOrder => f.write_str("differential, no ordinal order"),
            DiffClass::NotDifferential(r) => write!(f, "not differential; infinite {r}-order"),
            DiffClass::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub class: DiffClass,
    /// `false` when the reported order is only an upper bound.
    pub exact: bool,
    /// Probed r-orders, in probe order.
    pub probes: Vec<(Poly, OrderVerdict)>,
    pub rule: String,
}

pub fn classify(d: &OpExpr, probe_budget: usize) -> DiffClass {
    classify_with(d, probe_budget, &[]).class
}

/// Classification probing r-orders over the variables of `d` and `extra`.
pub fn classify_with(d: &OpExpr, probe_budget: usize, extra: &[Poly]) -> Classification {
    let cap = 2 * probe_budget as u64 + 2;
    let analysis = match analyze_ordinal_order(d) {
        Err(OrderError::ZeroOperator) => {
            return Classification {
                class: DiffClass::StronglyDiff(0),
                exact: true,
                probes: Vec::new(),
                rule: "zero operator".into(),
            }
        }
        Ok(a) => a,
    };
    let by_order = |a: &Ordinal, exact: bool, rule: String| Classification {
        class: match a.as_finite() {
            Some(n) => DiffClass::StronglyDiff(n),
            None => DiffClass::QuiteDiff(a.clone()),
        },
        exact,
        probes: Vec::new(),
        rule,
    };
    match &analysis.verdict {
        OrdinalOrderVerdict::Exact(a) => return by_order(a, true, analysis.rule),
        OrdinalOrderVerdict::UpperBound(a) => return by_order(a, false, analysis.rule),
        _ => {}
    }
    let mut candidates: Vec<Poly> = d.probe_variables(probe_budget).into_iter().map(Poly::var).collect();
    candidates.extend(extra.iter().cloned());
    let mut probes = Vec::new();
    for r in candidates {
        let v = r_order_traced(d, &r, cap, probe_budget).verdict;
        let infinite = matches!(v, OrderVerdict::InfiniteCertified(_));
        probes.push((r.clone(), v));
        if infinite {
            return Classification { class: DiffClass::NotDifferential(r), exact: true, probes, rule: analysis.rule };
        }
    }
    let all_finite = probes.iter().all(|(_, v)| matches!(v, OrderVerdict::Exact(_)));
    let class = match analysis.verdict {
        OrdinalOrderVerdict::NoOrdinalOrder(_) if all_finite => DiffClass::DiffWithoutOrdinalOrder,
        _ => DiffClass::Unknown,
    };
    Classification { class, exact: true, probes, rule: analysis.rule }
}

/// `λ` with `a = λ b`, re-exported for callers comparing chains.
pub fn proportional(a: &OpExpr, b: &OpExpr) -> Option<Rational> {
    a.scalar_ratio(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::FamilyTermSpec;
    use crate::weyl::WeylOp;

    fn fam(f: FamilyTermSpec) -> OpExpr {
        OpExpr::family(f)
    }

    #[test]
    fn r_order_examples() {
        let d_inf = fam(FamilyTermSpec::d_infinity());
        assert_eq!(r_order(&d_inf, &Poly::x(4), 8), OrderVerdict::Exact(1));
        let sh = fam(FamilyTermSpec::shift());
        assert!(matches!(r_order(&sh, &Poly::x(1), 10), OrderVerdict::InfiniteCertified(_)));
        let d3 = OpExpr::finite(WeylOp::derivative(Variable::x(1), 3));
        assert_eq!(r_order(&d3, &Poly::x(1), 8), OrderVerdict::Exact(3));
        assert_eq!(r_order(&d3, &Poly::x(1), 2), OrderVerdict::AtLeast(2));
    }

    #[test]
    fn ordinal_order_examples() {
        let w = Ordinal::omega();
        assert_eq!(ordinal_order(&fam(FamilyTermSpec::d_omega())), Ok(OrdinalOrderVerdict::Exact(w.clone())));
        let d3 = OpExpr::tensor_der(fam(FamilyTermSpec::d_omega()), Variable::y(0), 3).unwrap();
        assert_eq!(ordinal_order(&d3), Ok(OrdinalOrderVerdict::Exact(w.add(&Ordinal::finite(3)))));
        assert!(matches!(
            ordinal_order(&fam(FamilyTermSpec::d_infinity())),
            Ok(OrdinalOrderVerdict::NoOrdinalOrder(_))
        ));
        assert_eq!(ordinal_order(&fam(FamilyTermSpec::laplace())), Ok(OrdinalOrderVerdict::Exact(Ordinal::finite(2))));
        assert_eq!(ordinal_order(&OpExpr::zero()), Err(OrderError::ZeroOperator));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&fam(FamilyTermSpec::laplace()), 8), DiffClass::StronglyDiff(2));
        assert_eq!(classify(&fam(FamilyTermSpec::d_infinity()), 8), DiffClass::DiffWithoutOrdinalOrder);
        assert_eq!(classify(&fam(FamilyTermSpec::shift()), 8), DiffClass::NotDifferential(Poly::x(1)));
    }

    #[test]
    fn commutators_of_d_omega() {
        let d = fam(FamilyTermSpec::d_omega());
        for i in 1..=8 {
            let t = d.theta(&Poly::x(i));
            assert_eq!(ordinal_order(&t), Ok(OrdinalOrderVerdict::Exact(Ordinal::finite(i - 1))));
        }
    }

    #[test]
    fn sums_and_compositions() {
        let d_omega = fam(FamilyTermSpec::d_omega());
        let lap = fam(FamilyTermSpec::laplace());
        let s = OpExpr::sum(vec![d_omega.clone(), lap.clone()]);
        assert_eq!(ordinal_order(&s), Ok(OrdinalOrderVerdict::Exact(Ordinal::omega())));
        let c = OpExpr::compose(lap.clone(), lap);
        assert_eq!(ordinal_order(&c), Ok(OrdinalOrderVerdict::UpperBound(Ordinal::finite(4))));
        let ys = fam(FamilyTermSpec::single_var(1, Variable::Y_BASE as i64, 1, 1, 0));
        let c = OpExpr::compose(ys, d_omega);
        assert_eq!(ordinal_order(&c), Ok(OrdinalOrderVerdict::Exact(Ordinal::omega().mul(&Ordinal::finite(2)))));
    }
}
