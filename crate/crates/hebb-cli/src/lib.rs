//! Experiment runner library: named configurations, the two-phase and
//! end-to-end training drivers, and analysis exports. The `hebb` binary
//! is a thin CLI over these modules.

pub mod backprop;
pub mod config;
pub mod driver;
pub mod visualize;
