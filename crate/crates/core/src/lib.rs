//! Competitive equilibrium from equal incomes (CEEI) for a continuum of
//! unit-demand agents, with shadow costs, optimality certificates and a
//! two-good menu optimizer.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ceei;
pub mod certificate;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod shadow;
pub mod simplex;
pub mod twogood;

pub use error::{Error, Result};
