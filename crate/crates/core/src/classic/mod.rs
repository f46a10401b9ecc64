//! Non-learning controllers: Uniform, Webster's, Max-pressure and SOTL.

mod maxpressure;
mod sotl;
mod uniform;
mod webster;

pub use maxpressure::{maxpressure_decide, phase_counts, phase_pressures, MaxPressure};
pub use sotl::{sotl_decide, Sotl, SotlConfig, SotlInputs};
pub use uniform::{uniform_decide, Uniform};
pub use webster::{round_greens, webster_timings, FlowAccumulator, Webster, WebsterConfig, WebsterTimings};
