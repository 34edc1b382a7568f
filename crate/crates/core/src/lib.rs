// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fft;
pub mod grid;
pub mod kernels;
pub mod params;
pub mod plan;
pub mod quad;
pub mod solve;
pub mod specfun;
pub mod tables;
pub mod validate;

pub use error::{Error, Result};
