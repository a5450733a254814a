//! Closed-loop simulation of a three-tank water process whose sensor link is
//! protected by per-packet signed-permutation coding, with an EKF residual
//! monitor and a replay adversary.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod channel;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod keystream;
pub mod noise;
pub mod plant;
pub mod scenario;
pub mod signed_permutation;

pub use error::{Error, Result};
