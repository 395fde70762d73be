//! UDP replay of simulated traces and a collecting sink.

mod replay;
mod sink;
pub mod wire;

use std::convert::Infallible;
use std::io;

use thiserror::Error;

use crate::sim::trace::TraceError;

pub use replay::{replay_trace, Pacing, ReplayConfig, SendStats, DEFAULT_MAX_LATENESS};
pub use sink::{run_sink, Sink, SinkReport, StreamGap};
pub use wire::{decode_packet, encode_packet, Truncation, WireError};

#[derive(Debug, Error)]
pub enum LoadgenError {
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("speedup must be a positive finite factor, got {0}")]
    BadSpeedup(f64),
    #[error("trace is not sorted: timestamp {next_us} µs follows {prev_us} µs")]
    NotSorted { prev_us: u64, next_us: u64 },
    #[error(
        "replay fell {lateness_ms:.1} ms behind schedule for longer than {bound_ms:.1} ms; \
         this host cannot sustain the requested rate"
    )]
    Lagging { lateness_ms: f64, bound_ms: f64 },
}

impl From<Infallible> for LoadgenError {
    fn from(e: Infallible) -> Self {
        match e {}
    }
}
