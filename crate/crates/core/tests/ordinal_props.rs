//! Ordinal arithmetic checked against a flat oracle for ordinals whose
//! exponents have the form `ω·a + b`.

use std::cmp::Ordering;

use proptest::prelude::*;
use transdiff::ordinal::Ordinal;

/// `ω^(ω·a+b) · c` terms in strictly decreasing exponent order.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Flat(Vec<((u64, u64), u64)>);

fn exp_add(x: (u64, u64), y: (u64, u64)) -> (u64, u64) {
    if y.0 > 0 {
        (x.0 + y.0, y.1)
    } else {
        (x.0, x.1 + y.1)
    }
}

impl Flat {
    fn zero() -> Self {
        Flat(Vec::new())
    }

    fn add(&self, other: &Flat) -> Flat {
        let Some(&(e, c)) = other.0.first() else { return self.clone() };
        let mut out: Vec<_> = self.0.iter().copied().filter(|(x, _)| *x > e).collect();
        let carry = self.0.iter().find(|(x, _)| *x == e).map_or(0, |t| t.1);
        out.push((e, c + carry));
        out.extend(other.0.iter().skip(1).copied());
        Flat(out)
    }

    fn mul(&self, other: &Flat) -> Flat {
        let Some(&(lead, lead_c)) = self.0.first() else { return Flat::zero() };
        let mut acc = Flat::zero();
        for &(e, c) in &other.0 {
            let part = if e == (0, 0) {
                let mut t = self.0.clone();
                t[0].1 = lead_c * c;
                Flat(t)
            } else {
                Flat(vec![(exp_add(lead, e), c)])
            };
            acc = acc.add(&part);
        }
        acc
    }

    fn natural_sum(&self, other: &Flat) -> Flat {
        let mut m = std::collections::BTreeMap::new();
        for &(e, c) in self.0.iter().chain(&other.0) {
            *m.entry(e).or_insert(0) += c;
        }
        Flat(m.into_iter().rev().collect())
    }

    fn cmp(&self, other: &Flat) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            let c = a.cmp(b);
            if c != Ordering::Equal {
                return c;
            }
        }
        self.0.len().cmp(&other.0.len())
    }

    fn is_limit(&self) -> bool {
        self.0.last().is_some_and(|(e, _)| *e != (0, 0))
    }

    fn fundamental(&self, n: u64) -> Flat {
        let mut t = self.0.clone();
        let (e, c) = t.pop().unwrap();
        if c > 1 {
            t.push((e, c - 1));
        }
        let tail = if e.1 > 0 { ((e.0, e.1 - 1), n) } else { ((e.0 - 1, n), 1) };
        Flat(t).add(&Flat(vec![tail]))
    }

    fn to_ordinal(&self) -> Ordinal {
        Ordinal::from_terms(self.0.iter().map(|&((a, b), c)| {
            (Ordinal::from_terms([(Ordinal::one(), a), (Ordinal::zero(), b)]), c)
        }))
    }
}

fn flat() -> impl Strategy<Value = Flat> {
    prop::collection::vec(((0u64..=3, 0u64..=3), 1u64..=4), 0..=4).prop_map(|ts| {
        ts.into_iter().fold(Flat::zero(), |acc, t| acc.add(&Flat(vec![t])))
    })
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn arithmetic_matches_oracle(a in flat(), b in flat()) {
        let (x, y) = (a.to_ordinal(), b.to_ordinal());
        prop_assert_eq!(x.add(&y), a.add(&b).to_ordinal());
        prop_assert_eq!(x.mul(&y), a.mul(&b).to_ordinal());
        prop_assert_eq!(x.natural_sum(&y), a.natural_sum(&b).to_ordinal());
        prop_assert_eq!(x.cmp(&y), a.cmp(&b));
    }

    #[test]
    fn associativity(a in flat(), b in flat(), c in flat()) {
        let (x, y, z) = (a.to_ordinal(), b.to_ordinal(), c.to_ordinal());
        prop_assert_eq!(x.add(&y).add(&z), x.add(&y.add(&z)));
        prop_assert_eq!(x.mul(&y).mul(&z), x.mul(&y.mul(&z)));
    }

    #[test]
    fn left_distributivity(a in flat(), b in flat(), c in flat()) {
        let (x, y, z) = (a.to_ordinal(), b.to_ordinal(), c.to_ordinal());
        prop_assert_eq!(x.mul(&y.add(&z)), x.mul(&y).add(&x.mul(&z)));
    }

    #[test]
    fn right_monotonicity(a in flat(), b in flat(), c in flat()) {
        let (x, mut y, mut z) = (a.to_ordinal(), b.to_ordinal(), c.to_ordinal());
        if y == z {
            return Ok(());
        }
        if y > z {
            std::mem::swap(&mut y, &mut z);
        }
        prop_assert!(x.add(&y) < x.add(&z));
        if !x.is_zero() {
            prop_assert!(x.mul(&y) < x.mul(&z));
        }
    }

    #[test]
    fn fundamental_sequences(a in flat(), n in 1u64..50) {
        let x = a.to_ordinal();
        prop_assert_eq!(x.is_limit(), a.is_limit());
        if !a.is_limit() {
            prop_assert!(x.fundamental_sequence(n).is_err());
            return Ok(());
        }
        let s = x.fundamental_sequence(n).unwrap();
        prop_assert_eq!(&s, &a.fundamental(n).to_ordinal());
        prop_assert!(s < x);
        prop_assert!(s < x.fundamental_sequence(n + 1).unwrap());
    }

    #[test]
    fn cofinality(a in flat(), g in flat()) {
        let (x, gamma) = (a.to_ordinal(), g.to_ordinal());
        if !x.is_limit() || gamma >= x {
            return Ok(());
        }
        // the sequence is increasing, so checking the largest index suffices
        prop_assert!(x.fundamental_sequence(10_000).unwrap() >= gamma);
    }

    #[test]
    fn print_parse_round_trip(a in flat()) {
        let x = a.to_ordinal();
        prop_assert_eq!(Ordinal::parse(&x.to_ascii()).unwrap(), x.clone());
        prop_assert_eq!(Ordinal::parse(&x.to_string()).unwrap(), x);
    }

    #[test]
    fn successor_structure(a in flat()) {
        let x = a.to_ordinal();
        prop_assert_eq!(x.succ().predecessor(), Some(x.clone()));
        prop_assert!(x < x.succ());
        let (lim, k) = x.split_finite();
        prop_assert_eq!(lim.add(&Ordinal::finite(k)), x);
    }

    #[test]
    fn composition_bound_formula(a in flat(), b in flat()) {
        let (g, d) = (a.to_ordinal(), b.to_ordinal());
        let zeta = Ordinal::composition_bound(&g, &d);
        let p = g.succ().mul(&d.succ());
        let q = d.succ().mul(&g.succ());
        prop_assert_eq!(zeta.succ(), p.min(q));
        prop_assert_eq!(Ordinal::composition_bound(&d, &g), zeta);
    }
}

#[test]
fn non_commutativity_witnesses() {
    let w = Ordinal::omega();
    let one = Ordinal::one();
    let two = Ordinal::finite(2);
    assert_ne!(one.add(&w), w.add(&one));
    assert_eq!(one.add(&w), w);
    assert_ne!(two.mul(&w), w.mul(&two));
    assert_eq!(two.mul(&w), w);
}

#[test]
fn fundamental_sequence_examples() {
    let p = |s: &str| Ordinal::parse(s).unwrap();
    assert_eq!(p("w").fundamental_sequence(5).unwrap(), p("5"));
    assert_eq!(p("w^2").fundamental_sequence(3).unwrap(), p("w*3"));
    assert_eq!(p("w*2").fundamental_sequence(4).unwrap(), p("w+4"));
    assert!(p("w+1").fundamental_sequence(1).is_err());
    assert!(Ordinal::zero().fundamental_sequence(1).is_err());
}
