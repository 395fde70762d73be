use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{PacketEvent, SimError};
use crate::model::{ServiceClass, Subgroup};

/// Exact per-segment packet and byte totals of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    /// Packets per (service, subgroup).
    pub count: [[u64; 3]; 3],
    /// Bytes per (service, subgroup).
    pub bytes: [[u64; 3]; 3],
    pub service_count: [u64; 3],
    pub service_bytes: [u64; 3],
    pub total_count: u64,
    pub total_bytes: u64,
}

impl Default for TraceSummary {
    fn default() -> Self {
        Self::from_grids([[0; 3]; 3], [[0; 3]; 3])
    }
}

impl TraceSummary {
    pub fn from_grids(count: [[u64; 3]; 3], bytes: [[u64; 3]; 3]) -> Self {
        let service_count = count.map(|row| row.iter().sum());
        let service_bytes = bytes.map(|row| row.iter().sum());
        Self {
            count,
            bytes,
            service_count,
            service_bytes,
            total_count: service_count.iter().sum(),
            total_bytes: service_bytes.iter().sum(),
        }
    }

    pub fn count(&self, service: ServiceClass, group: Subgroup) -> u64 {
        self.count[service.index()][group.index()]
    }

    pub fn bytes(&self, service: ServiceClass, group: Subgroup) -> u64 {
        self.bytes[service.index()][group.index()]
    }

    /// True when the per-service and overall totals agree with the grids.
    pub fn is_consistent(&self) -> bool {
        *self == Self::from_grids(self.count, self.bytes)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct SeqTrack {
    max_seq: u64,
    received: u64,
}

/// Single-pass, order-insensitive trace accumulator. Partial accumulators can
/// be merged, so a trace may be summarized in parallel chunks.
#[derive(Debug, Default, Clone)]
pub struct TraceAccumulator {
    count: [[u64; 3]; 3],
    bytes: [[u64; 3]; 3],
    uav_subgroup: HashMap<u32, Subgroup>,
    seqs: HashMap<(u32, ServiceClass), SeqTrack>,
}

impl TraceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: &PacketEvent) -> Result<(), SimError> {
        let prev = *self.uav_subgroup.entry(e.uav_id).or_insert(e.subgroup);
        if prev != e.subgroup {
            return Err(SimError::Malformed(format!(
                "uav {} appears in both the {prev} and {} subgroups",
                e.uav_id, e.subgroup
            )));
        }
        let track = self.seqs.entry((e.uav_id, e.service)).or_default();
        track.max_seq = track.max_seq.max(e.seq);
        track.received += 1;

        let (i, j) = (e.service.index(), e.subgroup.index());
        self.count[i][j] += 1;
        self.bytes[i][j] += e.size;
        Ok(())
    }

    pub fn merge(&mut self, other: TraceAccumulator) -> Result<(), SimError> {
        for (uav, g) in other.uav_subgroup {
            let prev = *self.uav_subgroup.entry(uav).or_insert(g);
            if prev != g {
                return Err(SimError::Malformed(format!(
                    "uav {uav} appears in both the {prev} and {g} subgroups"
                )));
            }
        }
        for (key, t) in other.seqs {
            let track = self.seqs.entry(key).or_default();
            track.max_seq = track.max_seq.max(t.max_seq);
            track.received += t.received;
        }
        for i in 0..3 {
            for j in 0..3 {
                self.count[i][j] += other.count[i][j];
                self.bytes[i][j] += other.bytes[i][j];
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<TraceSummary, SimError> {
        for (&(uav, service), t) in &self.seqs {
            if t.received > t.max_seq + 1 {
                return Err(SimError::Malformed(format!(
                    "uav {uav} {service}: {} events but highest seq is {}",
                    t.received, t.max_seq
                )));
            }
        }
        Ok(TraceSummary::from_grids(self.count, self.bytes))
    }
}

/// Exact per-segment counts and byte sums of an event stream.
pub fn summarize_trace<I>(events: I) -> Result<TraceSummary, SimError>
where
    I: IntoIterator<Item = PacketEvent>,
{
    let mut acc = TraceAccumulator::new();
    for e in events {
        acc.push(&e)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(uav_id: u32, subgroup: Subgroup, service: ServiceClass, seq: u64, size: u64) -> PacketEvent {
        PacketEvent {
            timestamp_us: seq * 10,
            uav_id,
            subgroup,
            service,
            seq,
            size,
        }
    }

    #[test]
    fn empty_trace() {
        let s = summarize_trace(std::iter::empty()).unwrap();
        assert_eq!(s, TraceSummary::default());
        assert_eq!(s.total_count, 0);
    }

    #[test]
    fn two_rich_telemetry_events() {
        let s = summarize_trace([
            ev(7, Subgroup::Rich, ServiceClass::Telemetry, 0, 100),
            ev(7, Subgroup::Rich, ServiceClass::Telemetry, 1, 150),
        ])
        .unwrap();
        assert_eq!(s.count(ServiceClass::Telemetry, Subgroup::Rich), 2);
        assert_eq!(s.bytes(ServiceClass::Telemetry, Subgroup::Rich), 250);
        assert_eq!(s.total_count, 2);
        assert!(s.is_consistent());
    }

    #[test]
    fn conflicting_subgroup_is_malformed() {
        let r = summarize_trace([
            ev(1, Subgroup::Poor, ServiceClass::Iot, 0, 1),
            ev(1, Subgroup::Rich, ServiceClass::Iot, 1, 1),
        ]);
        assert!(matches!(r, Err(SimError::Malformed(_))));
    }

    #[test]
    fn duplicate_sequence_numbers_are_malformed() {
        let r = summarize_trace([
            ev(1, Subgroup::Poor, ServiceClass::Iot, 0, 1),
            ev(1, Subgroup::Poor, ServiceClass::Iot, 0, 1),
        ]);
        assert!(matches!(r, Err(SimError::Malformed(_))));
    }

    proptest::proptest! {
        #[test]
        fn order_insensitive_and_partitioned(
            raw in proptest::collection::vec((0u32..5, 0usize..3, 0u64..1000), 0..200),
            split in 0usize..200,
        ) {
            let mut next_seq = HashMap::new();
            let events: Vec<PacketEvent> = raw
                .iter()
                .map(|&(uav, svc, size)| {
                    let service = ServiceClass::from_index(svc).unwrap();
                    let seq = next_seq.entry((uav, svc)).or_insert(0u64);
                    let e = ev(uav, Subgroup::from_index(uav as usize % 3).unwrap(), service, *seq, size);
                    *seq += 1;
                    e
                })
                .collect();
            let forward = summarize_trace(events.iter().copied()).unwrap();
            let backward = summarize_trace(events.iter().rev().copied()).unwrap();
            proptest::prop_assert_eq!(&forward, &backward);
            proptest::prop_assert_eq!(forward.total_count, events.len() as u64);

            let cut = split.min(events.len());
            let mut a = TraceAccumulator::new();
            let mut b = TraceAccumulator::new();
            events[..cut].iter().for_each(|e| a.push(e).unwrap());
            events[cut..].iter().for_each(|e| b.push(e).unwrap());
            a.merge(b).unwrap();
            proptest::prop_assert_eq!(a.finish().unwrap(), forward);
        }
    }
}
