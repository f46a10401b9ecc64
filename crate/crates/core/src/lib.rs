//! Traffic-signal-control core: network model, point-queue simulator,
//! signal sequencing, classic and learning controllers, and a small dense
//! neural-network engine.

#![no_std]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classic;
pub mod demand;
pub mod episode;
pub mod error;
pub mod fixtures;
pub mod net;
pub mod neural;
pub mod rl;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
