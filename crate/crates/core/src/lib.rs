//! Simulation and model-order-reduction toolkit for a magnetically kicked
//! cantilever oscillator.
//!
//! The physical system is a clamped-free Bernoulli-Euler beam whose tip
//! carries a permanent magnet. Near the undeflected position the tip sits in
//! the gap of an electromagnetic kicker of half-width `d/2`: inside the gap
//! the magnet adds a linear restoring spring `k` at the tip, and while the
//! tip crosses the gap faster than a threshold speed `vcr` the coil fires a
//! constant force `F` along the direction of motion. Outside the gap the tip
//! is free. The result is a piecewise-linear hybrid system: three linear
//! beam models glued together by an eight-region phase-plane automaton with
//! a kick latch.
//!
//! The crate provides:
//!
//! * [`modal`] — exact modal bases for the free-tip and spring-tip beam
//!   variants (characteristic roots, scaled mode-shape evaluation,
//!   orthonormalization, basis-change matrix, static kick deflection);
//! * [`hybrid`] — the region automaton, modal equations of motion, and
//!   discrete transition handling;
//! * [`integrate`] — an adaptive Dormand-Prince RK4(5) integrator with
//!   bisection-based event localization, section-crossing capture, and
//!   uniform-grid field sampling;
//! * [`steady`] — steady-state classification from Poincaré-section data;
//! * [`bifurcation`] — continuation sweeps over the kick strength and
//!   dataset comparison;
//! * [`pod`] / [`closure`] — proper orthogonal decomposition of snapshot
//!   data and the energy-closure criterion for picking the reduced
//!   dimension;
//! * [`rom`] — Galerkin reduced-order models built on the POD basis,
//!   integrated with the same hybrid machinery;
//! * [`analysis`] — RMS trajectory errors, periodograms, principal angles
//!   between POD subspaces.

pub mod analysis;
pub mod bifurcation;
pub mod chebyshev;
pub mod closure;
pub mod error;
pub mod hybrid;
pub mod integrate;
pub mod modal;
pub mod params;
pub mod pod;
pub mod quadrature;
pub mod rom;
pub mod sampling;
pub mod steady;

pub use error::{Error, Result};
pub use params::{nondimensionalize, DimensionedParams, SystemParams};
