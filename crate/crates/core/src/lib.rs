// Negated comparisons reject NaN on purpose; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod env_sim;
pub mod error;
pub mod estimators;
pub mod gf;
pub mod law;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
