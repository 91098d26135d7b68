//! Edge-assisted holographic video streaming over a THz link driven by a
//! reconfigurable holographic surface.
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod beamformer;
pub mod channel;
pub mod error;
pub mod harness;
pub mod hetero;
pub mod homo;
pub mod latency;
pub mod surface;
pub mod units;

pub use error::{Error, Result};
