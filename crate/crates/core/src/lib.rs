// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod downstream;
pub mod error;
pub mod graph;
pub mod induced;
pub mod kernels;
pub mod sdp;

pub use error::{Error, Result};
