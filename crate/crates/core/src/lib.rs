#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod converge;
pub mod error;
pub mod measures;
pub mod potential;
pub mod quadrature;
pub mod registry;
pub mod scattering;
pub mod spectrum;
pub mod stochastic;

pub use error::{Error, Result};
