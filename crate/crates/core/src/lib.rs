#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
mod fft;
pub mod grid;
pub mod kernels;
pub mod kinetic;
pub mod nonlinearity;
pub mod norms;
pub mod operator;
pub mod quadrature;
pub mod selfsim;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Spectrum};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
