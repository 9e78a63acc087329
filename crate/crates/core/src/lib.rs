// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod copula;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod forecasters;
mod normal;
pub mod rng;

pub use error::{Error, Result};
