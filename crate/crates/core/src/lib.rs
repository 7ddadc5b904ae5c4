//! Heterogeneous domain adaptation with simultaneous semantic alignment.
//!
//! Two domain-specific encoders map source and target features of different
//! widths into a shared space, where one classifier serves both domains. The
//! networks are trained jointly on
//!
//! - cross-entropy on labeled source data,
//! - an implicit correlation loss mixing cross-entropy and temperature-softened
//!   per-class source predictions on labeled target data,
//! - an explicit alignment loss between per-class source, target and pooled
//!   centroids, using unlabeled target rows whose classifier and
//!   geometric-similarity labels agree,
//! - an adversarial domain loss against a single-layer discriminator.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and the
//! command line live in the `ssan` crate.

#![no_std]
// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod checks;
pub mod data;
mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod semantics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Matrix, Tape, Var};
