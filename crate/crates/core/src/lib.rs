//! Numerical toolkit for almost periodic and semi-almost periodic functions:
//! Bochner–Fejér smoothing, harmonic extension on the strip and the disk,
//! and a d-bar gluing pipeline producing explicit approximants.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ap;
pub mod disk;
pub mod fejer;
pub mod glue;
pub mod grid;
pub mod holo;
pub mod polydisk;
pub mod sap;
pub mod strip;
pub mod vector;

pub use ap::{ApData, ApError, AveragingPlan, BasisSet, EvaluationOracle, Frequency, Term, TrigPolynomial};
pub use fejer::{KernelError, KernelSpec};
pub use num_complex::Complex64;
pub use vector::{NormKind, VectorValue};
