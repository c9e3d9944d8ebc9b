//! Numerical homogenization of divergence-form elliptic operators with almost-periodic
//! coefficients: approximate correctors, homogenized matrices, almost-periodicity moduli,
//! and convergence-rate experiments on uniform box grids.

pub mod ap_metrics;
pub mod corrector;
mod error;
pub mod experiments;
pub mod fd_solver;
pub mod numfmt;
pub mod tensor_field;

pub use error::{Error, Result};
