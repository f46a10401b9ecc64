//! Experiment harness around the control core: file formats, seeds,
//! the actor/learner training fabric, tuning and evaluation, and the CLI.

pub mod bundled;
pub mod cli;
pub mod error;
pub mod fabric;
pub mod harness;
pub mod hp;
pub mod io;
pub mod seed;
pub mod stats;

pub use error::{LabError, LabResult};
