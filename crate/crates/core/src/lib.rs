//! Numerical laboratory for large deviations of S-unimodal interval maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`map`]: evaluating maps, orbits, Birkhoff averages, superstable and
//!   Feigenbaum parameters of the quadratic family;
//! - [`renorm`]: restrictive intervals, the renormalization cascade, cycle
//!   covers, Markov partitions of the hyperbolic pieces between cycles;
//! - [`thermo`]: cylinder refinement, topological pressure, equilibrium
//!   statistics, the functional `F = h − χ` and level-1 rate functions;
//! - [`empirical`]: stratified Lebesgue estimates of deviation sets and
//!   fitted exponential decay rates;
//! - [`runner`]: configuration-driven pipelines writing CSV/JSON outputs.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
pub mod error;
pub mod interval;
pub mod map;
pub mod numerics;
pub mod renorm;
pub mod runner;
mod serde_ext;
pub mod thermo;

pub use error::{Error, Result};
pub use interval::Interval;
pub use map::{Family, Observable, QuadraticMap, UnimodalMap, UnimodalMapSpec, UserMap};
