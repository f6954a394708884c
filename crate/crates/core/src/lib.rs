// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod defects;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod nn;
pub mod qeen;
pub mod replay;
pub mod sac;
pub mod seed;
pub mod simplex;

pub use error::{Error, ErrorCategory, Result};
pub use simplex::SimplexAction;
