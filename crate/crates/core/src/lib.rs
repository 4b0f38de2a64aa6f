//! Maximal-regularity toolkit for non-autonomous second-order Cauchy problems
//! `ü + B(t)u̇ + A(t)u = f` governed by time-dependent forms.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod fem;
pub mod forms;
pub mod linalg;
pub mod lions;
pub mod norms;
pub mod quasilinear;
pub mod stepper;

pub use error::{Error, Result};
