//! Solver and certification toolkit for projected saddle-point dynamics of
//! constrained convex programs.
//!
//! The crate models Lagrangian saddle functions
//! `F(x, y, z) = f(x) + yᵀg(x) + zᵀ(Ax − b)` and provides:
//!
//! - the projected saddle-point vector field (gradient descent in x,
//!   projected ascent in y over the nonnegative orthant, ascent in z) and
//!   its smooth equality-constrained specialization ([`dynamics`]);
//! - fixed-step trajectory generation with projection, Lyapunov traces, and
//!   active-set event logging ([`integrate`]);
//! - ground-truth saddle computation, saddle-set geometry, and averaged
//!   curvature diagnostics ([`saddle`]);
//! - the Lyapunov/ISS-Lyapunov function family with analytic Lie
//!   derivatives and the constants that make decrease certificates
//!   checkable ([`lyapunov`]);
//! - a self-triggered discrete-time execution with state-dependent step
//!   sizes and a certified dwell-time lower bound ([`selftrig`]);
//! - built-in demonstration programs and plot-ready file formats
//!   ([`programs`], [`io`]).

pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod problem;
pub mod programs;
pub mod saddle;
pub mod selftrig;

pub use error::{Error, Result};
pub use problem::{ConstrainedProgram, SaddleState};
pub use saddle::SaddleSet;
