//! Co-simulation of feedback-stabilized microring photon-pair sources.

// Range checks are written `!(x > lo)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afe;
pub mod chi3;
pub mod cmt;
pub mod controller;
pub mod dac;
pub mod error;
pub mod plant;
pub mod quantum;
pub mod scenarios;
pub mod units;

pub use error::{Error, Result};
