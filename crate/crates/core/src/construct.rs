//! Operators `D_α` of prescribed ordinal order `α < ε₀`.
//!
//! `D_0` is the identity, `D_{β+1} = D_β ∘ ∂/∂y` for a fresh variable `y`, and
//! for a limit `α` the operator is the sum of `D_{α[n]}`, `n ≥ 1`, each built
//! on its own block of variables. Blocks are addressed by paths in the
//! construction tree and mapped to variables by [`VariableAllocator`].
//!
//! A limit node at address `a` builds branch `n` at `a.(n−1)`. For
//! `α = β + k` with `β` zero or a limit, the node uses the variables at `a.j`,
//! `1 ≤ j ≤ k`, and builds `D_β` at `a.0`. Each address plays one role, and
//! the first branch of every limit costs a single bit of the encoding.

use std::fmt;
use std::sync::Arc;

use crate::ordinal::Ordinal;
use crate::order::{ordinal_order, OrderError, OrdinalOrderVerdict};
use crate::ring::{Poly, Variable};
use crate::stream::{BranchGenerator, OpExpr, VarSupport, VariableAllocator};

/// Address of a node in the construction tree.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuildAddress(pub Vec<u64>);

impl BuildAddress {
    pub fn root() -> Self {
        BuildAddress(Vec::new())
    }

    pub fn child(&self, k: u64) -> Self {
        let mut p = self.0.clone();
        p.push(k);
        BuildAddress(p)
    }

    pub fn variable(&self) -> Variable {
        VariableAllocator::encode(&self.0).expect("construction tree exceeds the variable space")
    }
}

impl fmt::Display for BuildAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let s: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&s.join("."))
    }
}

/// Branches of a limit stage.
#[derive(Debug)]
struct LimitStage {
    alpha: Ordinal,
    at: BuildAddress,
}

impl BranchGenerator for LimitStage {
    fn branch(&self, n: u64) -> OpExpr {
        build_at(&self.declared_order(n), &self.at.child(n - 1))
    }

    fn declared_order(&self, n: u64) -> Ordinal {
        self.alpha.fundamental_sequence(n).expect("limit stage")
    }

    fn supremum(&self) -> Ordinal {
        self.alpha.clone()
    }

    fn branch_of(&self, v: Variable) -> Option<u64> {
        let path = VariableAllocator::decode(v)?;
        let depth = self.at.0.len();
        (path.len() > depth && path.starts_with(&self.at.0)).then(|| path[depth] + 1)
    }

    fn support(&self) -> VarSupport {
        VarSupport::Block(self.at.0.clone())
    }

    fn describe(&self) -> String {
        if self.at.0.is_empty() {
            format!("dalpha({:#})", self.alpha)
        } else {
            format!("dalpha({:#} @ {})", self.alpha, self.at)
        }
    }
}

pub fn build_d(alpha: &Ordinal) -> OpExpr {
    build_at(alpha, &BuildAddress::root())
}

/// `D_α` on the block of `at`.
pub fn build_at(alpha: &Ordinal, at: &BuildAddress) -> OpExpr {
    if alpha.is_zero() {
        return OpExpr::identity();
    }
    let (beta, k) = alpha.split_finite();
    if k > 0 {
        return (1..=k).fold(build_at(&beta, &at.child(0)), |acc, j| {
            OpExpr::tensor_der(acc, at.child(j).variable(), 1).expect("blocks are disjoint")
        });
    }
    OpExpr::limit(Arc::new(LimitStage { alpha: alpha.clone(), at: at.clone() }))
}

/// Number of nested stages along the first branch.
pub fn construction_depth(alpha: &Ordinal) -> usize {
    let mut a = alpha.clone();
    let mut depth = 0;
    while !a.is_zero() {
        a = match a.predecessor() {
            Some(b) => b,
            None => a.fundamental_sequence(1).expect("limit"),
        };
        depth += 1;
    }
    depth
}

#[derive(Clone, Debug)]
pub struct BuildSummary {
    pub alpha: Ordinal,
    pub depth: usize,
    /// Top-level blocks: address, declared order and the block's root
    /// variable (for successors, the variable whose derivative reaches that order).
    pub blocks: Vec<(BuildAddress, Ordinal, Variable)>,
}

impl fmt::Display for BuildSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "D_{} depth {}", self.alpha, self.depth)?;
        for (addr, ord, v) in &self.blocks {
            writeln!(f, "  block {addr}: order {ord}, root {v}")?;
        }
        Ok(())
    }
}

/// Summary listing the first `branches` blocks of a limit stage (or the chain
/// of successor variables otherwise).
pub fn summarize(alpha: &Ordinal, branches: u64) -> BuildSummary {
    let mut blocks = Vec::new();
    let root = BuildAddress::root();
    if alpha.is_limit() {
        for n in 1..=branches {
            let addr = root.child(n - 1);
            let ord = alpha.fundamental_sequence(n).expect("limit");
            let v = addr.variable();
            blocks.push((addr, ord, v));
        }
    } else {
        let (beta, k) = alpha.split_finite();
        for j in (1..=k).rev().take(branches as usize) {
            let addr = root.child(j);
            let v = addr.variable();
            blocks.push((addr, beta.add(&Ordinal::finite(j)), v));
        }
    }
    BuildSummary { alpha: alpha.clone(), depth: construction_depth(alpha), blocks }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbeReport {
    Consistent(Vec<(Variable, Ordinal)>),
    Inconsistent(String),
}

impl ProbeReport {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ProbeReport::Consistent(_))
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeReport::Consistent(obs) => {
                let s: Vec<String> = obs.iter().map(|(v, o)| format!("θ_{v}: {o}")).collect();
                write!(f, "consistent ({})", s.join(", "))
            }
            ProbeReport::Inconsistent(d) => write!(f, "inconsistent: {d}"),
        }
    }
}

fn fmt_order(o: &Ordinal) -> String {
    if o.is_finite() {
        format!("finite order {o}")
    } else {
        format!("ordinal order {o}")
    }
}

/// Checks the commutators `θ_x(D)` of probed variables against `α`.
pub fn verify_order_probes(d: &OpExpr, alpha: &Ordinal, budget: usize) -> ProbeReport {
    use OrdinalOrderVerdict::*;
    match ordinal_order(d) {
        Ok(Exact(b)) if b != *alpha => return ProbeReport::Inconsistent(format!("{} ≠ {alpha}", fmt_order(&b))),
        Ok(NoOrdinalOrder(w)) => return ProbeReport::Inconsistent(format!("no ordinal order (witnesses {w})")),
        Err(OrderError::ZeroOperator) => return ProbeReport::Inconsistent("zero operator".into()),
        _ => {}
    }
    if !alpha.is_zero() && !d.apply(&Poly::one()).is_zero() {
        return ProbeReport::Inconsistent("D(1) ≠ 0".into());
    }
    let mut observed = Vec::new();
    for v in d.probe_variables(budget) {
        let t = d.theta_var(v);
        let o = match ordinal_order(&t) {
            Err(OrderError::ZeroOperator) => continue,
            Ok(Exact(o)) | Ok(UpperBound(o)) => o,
            Ok(other) => return ProbeReport::Inconsistent(format!("θ_{v}: undetermined order ({other:?})")),
        };
        if o >= *alpha {
            return ProbeReport::Inconsistent(format!("θ_{v} has order {o} ≥ {alpha}"));
        }
        observed.push((v, o));
    }
    if let Some(pred) = alpha.predecessor() {
        if !observed.iter().any(|(_, o)| *o == pred) {
            return ProbeReport::Inconsistent(format!("no probed commutator reaches order {pred}"));
        }
    } else if alpha.is_limit() {
        for n in 1..budget.saturating_sub(1) as u64 {
            let target = alpha.fundamental_sequence(n).expect("limit");
            if !observed.iter().any(|(_, o)| *o >= target) {
                return ProbeReport::Inconsistent(format!("probed orders stay below {target}"));
            }
        }
    }
    ProbeReport::Consistent(observed)
}
