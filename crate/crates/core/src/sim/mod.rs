//! Packet-level simulation of the nine traffic segments.
//!
//! Each UAV runs one independent Poisson process per service. Random numbers
//! come from a ChaCha stream keyed by the scenario seed and selected by
//! `(uav_id, service)`, so the generated trace does not depend on how the work
//! is split across threads.

mod assign;
mod compare;
mod generate;
mod summary;
pub mod trace;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ServiceClass, Subgroup};

pub use assign::{assign_uavs, UavAssignment};
pub use compare::{
    compare_forecast, ComparisonReport, SegmentComparison, ServiceComparison, OUTLIER_Z,
};
pub use generate::{
    expected_segment_counts, generate_events, generate_events_with, simulate_summary,
    simulate_summary_with, EventStream, SimOptions, DEFAULT_MAX_EXPECTED_EVENTS,
};
pub use summary::{summarize_trace, TraceAccumulator, TraceSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "capacity exceeded: scenario expects {expected:.3e} events, above the safety cap of {cap:.3e}"
    )]
    Capacity { expected: f64, cap: f64 },
    #[error("malformed event: {0}")]
    Malformed(String),
    #[error("inconsistent simulation inputs: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One simulated transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketEvent {
    /// Microseconds since the start of the experiment.
    pub timestamp_us: u64,
    pub uav_id: u32,
    pub subgroup: Subgroup,
    pub service: ServiceClass,
    /// Per-(uav, service) sequence number, starting at 0.
    pub seq: u64,
    /// Transaction size, bytes.
    pub size: u64,
}

impl PacketEvent {
    pub fn timestamp_s(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    /// Canonical trace order.
    pub fn order_key(&self) -> (u64, u32, ServiceClass, u64) {
        (self.timestamp_us, self.uav_id, self.service, self.seq)
    }
}

pub(crate) fn subgroup_range(counts: &[u64; 3], group: Subgroup) -> Range<u64> {
    let start: u64 = counts[..group.index()].iter().sum();
    start..start + counts[group.index()]
}
