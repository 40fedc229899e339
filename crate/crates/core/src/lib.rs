//! Differential operators of finite, transfinite and no ordinal order acting on
//! polynomial rings in countably many variables.
//!
//! The crate is organised bottom-up:
//!
//! * [`ordinal`]: Cantor normal form arithmetic below ε₀.
//! * [`ring`]: sparse rational polynomials and monomial ideals.
//! * [`weyl`]: finite normal-ordered differential operators.
//! * [`stream`]: locally finite infinite operator expressions.
//! * [`order`]: r-order, ordinal order and classification.
//! * [`construct`]: operators realizing a prescribed ordinal order.
//! * [`torsion`]: torsion-filtration classifiers for monomial modules.
//! * [`localize`]: extension of operators to principal localizations.
//! * [`cli`]: parsers and the command front end.

pub mod cli;
pub mod construct;
pub mod localize;
pub mod order;
pub mod ordinal;
pub mod ring;
pub mod stream;
pub mod torsion;
pub mod weyl;

pub use num::BigRational as Rational;
