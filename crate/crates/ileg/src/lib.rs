//! Risk-sensitive trajectory optimization for nonlinear stochastic systems.
//!
//! This crate implements ILEG (iterative linear exponential-quadratic
//! Gaussian control): it solves continuous-time optimal control problems
//! of the form
//!
//! ```text
//! dx = (f(t,x) + G(t,x) u) dt + C(t,x) dw,      cov(dw) = Σ dt
//! min E[ exp( σ (Φ_f(x(t_f)) + ∫ L(t,x,u) dt) ) ]
//! ```
//!
//! by iterating a local linear-quadratic approximation along the current
//! nominal trajectory and solving the associated risk-sensitive Riccati
//! ODEs backward in time. The scalar risk parameter σ interpolates between
//! risk-seeking (σ < 0), risk-neutral (σ = 0, standard iterative LQG) and
//! risk-averse (σ > 0) feedback policies; σ is bounded above by the
//! requirement that B R⁻¹ Bᵀ − σ C Σ Cᵀ stays positive semidefinite.
//!
//! Pipeline:
//!
//! * [`problem`]: problem data model, built-in benchmark problems, config
//!   file loading.
//! * [`approx`]: time-varying linear-quadratic model along a nominal
//!   trajectory (finite-difference linearization and cost quadratization).
//! * [`riccati`]: backward value-function ODEs and affine policy
//!   extraction, with the σ existence check.
//! * [`rollout`]: deterministic and Euler–Maruyama forward simulation,
//!   cost evaluation, Monte-Carlo risk statistics.
//! * [`solver`]: the outer iteration with backtracking line search, plus
//!   risk-parameter sweeps.
//!
//! With the `parallel` feature (on by default) Monte-Carlo sampling and
//! risk-parameter sweeps run on rayon; sequential fallbacks
//! (`*_seq` functions) are always available and produce bit-identical
//! results.

pub mod approx;
pub mod error;
mod exec;
pub mod problem;
pub mod riccati;
pub mod rollout;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{ControlProblem, ProblemConfig, SolverConfig};
pub use riccati::{AffinePolicy, ValueQuadratic};
pub use rollout::RolloutStats;
pub use solver::{SolveResult, Termination};
