//! Numerics for a driven two-phonon parametric opto-mechanical oscillator.
//!
//! The cavity mode `a` and mechanical mode `b` exchange energy through the
//! resonant interaction `χ(a† b² + a b†²)` while the mechanics is driven
//! coherently with strength `ε`. Above a critical drive the single fixed
//! point loses stability through a supercritical Hopf bifurcation and the
//! system self-pulses.
//!
//! Modules, bottom-up:
//!
//! * [`model`]: parameters, physical realisations, state representation.
//! * [`ode`]: adaptive Dormand–Prince 5(4) integrator with continuous-extension output.
//! * [`semiclassics`]: vector field, fixed point, stability, Hopf point,
//!   limit-cycle detection on a Poincaré section.
//! * [`center_manifold`]: quadratic center manifold, normal form, growth
//!   and Lyapunov coefficients, predicted orbit.
//! * [`noise`]: linearized drift/diffusion model, noise spectra, stationary
//!   covariance, phase-diffusion constant.
//! * [`stochastic`]: Euler–Maruyama ensembles, periodogram estimation,
//!   phase diffusion on the cycle.
//! * [`exec`]: rayon-backed data-parallel helpers with a sequential fallback.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod center_manifold;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod noise;
pub mod ode;
pub mod semiclassics;
pub mod stochastic;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{SemiclassicalState, SystemParams};
