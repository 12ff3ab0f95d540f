// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosting;
pub mod env;
pub mod error;
pub mod eval;
pub mod gfn;
pub mod numkit;
pub mod oracle;
pub mod rewards;
pub mod runner;
pub use error::{Error, Result};
