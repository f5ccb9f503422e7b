//! Enthalpy-method solver for the two-phase Stefan problem `u_t = Δα(u)`
//! with signed-measure initial data, together with a duality-based
//! certificate bounding `|∫(u - v)Θ|` for two discrete solutions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod barriers;
pub mod duality;
pub mod error;
pub mod forward;
pub mod grid;
pub mod linsolve;
pub mod measures;
pub mod nonlinearity;
pub mod representation;
pub mod similarity;
pub mod testfn;

pub use error::{Error, Result};
pub use grid::{BallDomain, Boundary, Field, Grid, SpaceTimeField};
pub use nonlinearity::Nonlinearity;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
