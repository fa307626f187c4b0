//! Numerical laboratory for chordal Loewner evolution driven by scaled
//! Brownian motion.
//!
//! The crate builds approximate traces by composing explicit square-root
//! slit maps, checks them against adaptive ODE integration of the Loewner
//! equations, quantifies how traces move when the diffusivity κ changes
//! under a coupled driver, and verifies the level-2 rough-path formulation
//! of the backward equation away from the origin.
//!
//! Modules:
//! - [`driver`]: Brownian sampling, κ-scaling, square-root interpolation,
//!   moduli of continuity.
//! - [`conformal`]: explicit slit-map blocks and their compositions.
//! - [`ode`]: adaptive integration of the forward/backward equations; the
//!   oracle the closed forms are pinned against.
//! - [`trace`]: trace construction, reference traces, near-tip diagnostics.
//! - [`analysis`]: driver distances, closeness bounds, rate fitting, mesh
//!   selection and the κ-continuity experiment.
//! - [`roughpath`]: p-variation, level-2 lifts, the d_p metric and a
//!   level-2 solver for the backward equation.

// Validation guards use `!(x > 0.0)` so NaN trips the same branch as a
// bad sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod conformal;
pub mod driver;
pub mod ode;
pub mod roughpath;
pub mod trace;

pub use conformal::{HalfPlanePoint, MapChain, SlitMapParams};
pub use driver::{BrownianSample, DriverKind, DriverPath};
pub use trace::TraceCurve;
