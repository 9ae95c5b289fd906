//! Numerical toolkit for diffusions in random media under a small constant force.
//!
//! The crate builds the objects needed to measure how fast the small-force
//! mobility of a reversible diffusion converges to its zero-force diffusivity:
//!
//! * [`environment`] — seeded random coefficient fields `a(x)` and potentials
//!   `V(x)` with uniform ellipticity, bounded potential, Lipschitz regularity,
//!   and finite range of dependence, plus the weighted field `ã = e^{-2V} a`;
//! * [`diffusion`] — Euler–Maruyama simulation of the time-changed tilted
//!   diffusion `dY = (½∇·ã + λ ã e₁) dt + ã^{1/2} dW`, the additive clock
//!   `A(s) = ∫ e^{-2V(Y)} du`, and direct velocity/diffusivity estimators;
//! * [`elliptic`] — finite-difference solves on triadic cubes: Dirichlet
//!   correctors, the homogenized matrix, tilted velocity and clock resolvents,
//!   and a spectral negative-Sobolev diagnostic;
//! * [`renewal`] — regeneration detection on simulated paths (ladder times on
//!   the `λ⁻²` lattice, Bernoulli marks, no-backtracking) and renewal
//!   estimators of the velocity `ℓ(λ)` and clock rate `η(λ)`;
//! * [`einstein`] — orchestration of the headline experiments: Feynman–Kac
//!   cross-checks, the mobility error `ℓ_X(λ)/λ − Σ_X e₁`, its fitted rate in
//!   `λ`, and Girsanov / exit-time consistency checks.
//!
//! Everything is deterministic given the configured seeds: field evaluation
//! uses a counter-based hash, each path owns a counter-derived RNG stream, and
//! reductions run in a fixed order so parallel and serial runs agree bitwise.

pub mod config;
pub mod diffusion;
pub mod einstein;
pub mod elliptic;
pub mod environment;
pub mod error;
pub mod exec;
pub mod geom;
pub mod medium;
pub mod renewal;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
