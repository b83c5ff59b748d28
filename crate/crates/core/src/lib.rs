//! Heat kernels, mild solutions and Fujita-type diagnostics for
//! `u_t + (-Δ)u + (-Δ)^s u = |u|^p` on a periodic box.
// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fujita;
pub mod io;
pub mod kernels;
pub mod mild;
pub mod spectral;
pub mod stochastic;

pub use error::{Error, Result};
