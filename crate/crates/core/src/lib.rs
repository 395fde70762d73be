//! Traffic-flow model for multi-service UAV swarms.
//!
//! - [`model`]: closed-form subgroup partition, segment shares, rates and
//!   packet/byte forecasts.
//! - [`scenario`]: scenario files and the built-in presets.
//! - [`sim`]: seeded packet-level simulation, trace files and
//!   theory-vs-simulation comparison.
//! - [`loadgen`]: UDP replay of traces and a collecting sink.

pub mod loadgen;
pub mod model;
pub mod scenario;
pub mod sim;

pub use model::{ServiceClass, SolvedModel, Subgroup};
pub use scenario::{preset, Preset, ScenarioConfig};
