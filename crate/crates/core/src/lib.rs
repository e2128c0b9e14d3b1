//! Mechanics of symmetric systems on principal bundles, reduced to gauge-fixed
//! coordinates.
//!
//! A configuration space `P(M, G) × V` (bundle point `Q`, linear-space point `f`)
//! carries a free isometric action of a Lie group `G`. Picking a gauge surface
//! `Σ = {χ = 0}` with local parameters `x` turns the invariant dynamics into a
//! closed system for `(x, f̃, ẋ, f̃̇, p)` where `f̃` is the gauge-aligned
//! `V`-coordinate and `p` the conserved-algebra momentum. This crate builds the
//! geometric data of that reduction (orbit metrics, horizontal projectors,
//! mechanical connection, curvature, Christoffel symbols) and integrates the
//! reduced equations of motion, with every layer validated against
//! finite-difference and full-space oracles.
//!
//! Modules are layered bottom-up:
//!
//! * [`scalar`], [`linalg`], [`calculus`] — dual-number autodiff and small dense
//!   linear algebra, generic over the scalar type so jets of any geometric map
//!   come from the same code path that computes values.
//! * [`algebra`] — Lie algebra data, group charts, Killing-field consistency.
//! * [`model`], [`models`] — the bundle-model contract and the built-in models.
//! * [`bundle`], [`gaugefield`], [`christoffel`] — pointwise geometry of the
//!   reduction.
//! * [`dynamics`], [`ode`] — reduced/full equations of motion and integrators.
//! * [`report`], [`driver`] — check reports, simulation drivers, file formats.

// Tensor contractions read clearest as explicit index loops, negated
// comparisons (`!(x > 0.0)`) are deliberate NaN-rejecting guards, and
// multi-matrix returns are honest tuples rather than one-shot structs.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod algebra;
pub mod bundle;
pub mod calculus;
pub mod christoffel;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod gaugefield;
pub mod linalg;
pub mod model;
pub mod models;
pub mod ode;
pub mod report;
pub mod scalar;

pub use error::CoreError;
pub use scalar::{Dual, Scalar};
