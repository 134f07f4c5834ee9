//! Certified computations for finitely generated matrix groups over Q:
//! freeness certificates (ping-pong and table-tennis), spectral and norm
//! invariants at real and p-adic places, growth and escape diagnostics, and
//! finite-group corollaries over prime fields.
//!
//! All arithmetic is exact: rationals, quadratic extensions Q(sqrt(D)),
//! certified rational intervals with outward rounding, and exact p-adic
//! valuations. No floating point.

pub mod conjugators;
pub mod linalg;
pub mod p1dyn;
pub mod pingpong;
pub mod projective;
pub mod scalars;
pub mod search;
pub mod sl2;
pub mod setcalc;

pub use linalg::QMatrix;
pub use scalars::{ExactScalar, MagOrder, Magnitude, Place, Precision, Rat, ScalarError};
