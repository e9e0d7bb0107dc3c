// Negated comparisons reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for small-noise semilinear SPDEs on the unit interval.
//!
//! The equations under study have the form
//!
//! ```text
//! du/dt = d²u/dx² + ∂/∂x g(t,x,u) + f(t,x,u) + √ε σ(t,x,u) Ẇ(t,x)
//! ```
//!
//! on `[0,T] × [0,1]` with zero Dirichlet boundary conditions, driven by
//! space-time white noise (the mixed derivative of a Brownian sheet). The
//! family covers the stochastic heat equation, stochastic Burgers, and
//! bounded reaction-diffusion models.
//!
//! The crate provides
//! * [`kernel`] — the Dirichlet heat kernel `G_t(x,y)` in spectral and
//!   image-charge form, its semigroup action, and empirical certificates for
//!   the classical Gaussian envelope bounds;
//! * [`grid_noise`] — the shared space-time grid, reproducible Brownian-sheet
//!   increments, and discretized `L²` controls;
//! * [`models`] — coefficient triples `(f, g = g₁+g₂, σ)` with sampled
//!   verification of their growth and Lipschitz hypotheses;
//! * [`solver`] — one semi-implicit scheme for the noisy, controlled, and
//!   zero-noise (skeleton) dynamics;
//! * [`rate`] — the action functional `½‖v‖²`, evaluated directly by
//!   inverting the scheme or minimized over controls with adjoint gradients;
//! * [`rare_event`] — plain and exponentially tilted Monte Carlo estimators,
//!   `−ε log p̂` curves, and the weak-convergence experiments.

pub mod error;
pub mod grid_noise;
pub mod kernel;
pub mod models;
mod numeric;
pub mod rare_event;
pub mod rate;
pub mod solver;

pub use error::{Error, Result};
