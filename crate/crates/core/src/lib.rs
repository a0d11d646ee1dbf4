//! Numerical core for two-player nonzero-sum risk-sensitive differential games
//! with ergodic cost.
//!
//! The crate discretizes the controlled generator
//! `L f = a_kk ∂²f/∂x_k² + b_k ∂f/∂x_k` on boxes `[-R, R]^d` with a monotone
//! upwind scheme, computes principal (Perron) eigenpairs of the frozen-strategy
//! operators `L + r_i`, solves the semi-linear eigenproblem
//! `min_u [L^u ψ + r_i(·, u) ψ] = λ ψ` by policy iteration, and searches for
//! Nash equilibria in stationary Markov strategies by damped best response.
//! Every quantity can be cross-checked by Euler–Maruyama Monte Carlo.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration and
//! the command line live in the `rsg` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the stencil algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod linalg;
mod math;

pub mod eigen;
pub mod expr;
pub mod grid;
pub mod hjb;
pub mod lyapunov;
pub mod model;
pub mod nash;
pub mod simulate;

pub use error::{Error, Result};
pub use expr::{Env, Expr, ExprError};
pub use grid::{build_grid, discretize, Grid, GridGame, StencilMatrix};
pub use model::{Action, ActionSet, GameModel, MarkovStrategy, MixedAction, Player};
