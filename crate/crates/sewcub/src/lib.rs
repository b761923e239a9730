//! High order weak approximation of SDEs driven by Gaussian martingales,
//! built from finitely supported path measures whose expected truncated
//! signatures match the driver, together with a numerical engine for the
//! multiplicative sewing construction of the limiting evolution system.
//!
//! The crate is organised around the objects it computes with:
//!
//! * [`algebra`] — truncated tensor algebra over words in the letters
//!   `{0,…,d}` (letter 0 is time and counts twice in the grading).
//! * [`paths`] — piecewise-linear bounded-variation drivers, their
//!   signatures, and a quadrature oracle for iterated integrals.
//! * [`gaussmart`] — quadratic-variation models of scalar Gaussian
//!   martingales and their expected Stratonovich signatures up to level 5.
//! * [`cubature`] — degree-5 path measures matching those signatures, plus
//!   executable verifiers for the moment-matching / multiplicativity /
//!   centering / diffusion-limit assumptions.
//! * [`flow`] — deterministic ODE propagation along driver paths and the
//!   resulting one-step operators.
//! * [`weakapprox`] — composition of one-step operators over partitions,
//!   closed-form references and empirical weak-order estimation.
//! * [`sewing`] — the multiplicative sewing engine on matrix-valued
//!   two-parameter families with defect measurement and bound checks.

// negated comparisons like `!(s < t)` are kept on purpose: they reject NaN
// endpoints along with genuinely bad orderings
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cubature;
pub mod flow;
pub mod gaussmart;
pub mod numerics;
pub mod paths;
pub mod sewing;
pub mod weakapprox;
