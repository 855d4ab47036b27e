//! Trajectory optimization for k-order Markov problems.
//!
//! A motion problem is authored semantically ([`motion`]): task maps over a
//! kinematic world ([`kinematics`]) with per-time-slice precisions and
//! targets. It is assembled into a [`problem_core::KOrderMarkovProblem`],
//! flattened into a generic constrained program whose Jacobians are stored
//! row-shifted ([`rowshifted`]), and solved by damped Gauss-Newton
//! ([`optim`]) inside an Augmented Lagrangian or log-barrier loop
//! ([`constrained`]).

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constrained;
pub mod error;
pub mod kinematics;
pub mod motion;
pub mod optim;
pub mod problem_core;
pub mod rowshifted;

pub use error::{Error, Result};
