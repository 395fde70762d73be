use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use socket2::{Domain, Protocol, Socket, Type};

use super::wire::decode_packet;
use super::LoadgenError;
use crate::model::{ServiceClass, Subgroup};

const RECV_BUFFER_BYTES: usize = 32 << 20;
const POLL_INTERVAL: Duration = Duration::from_millis(20);

/// Missing sequence numbers of one (uav, service) stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamGap {
    pub uav_id: u32,
    pub service: ServiceClass,
    /// Highest seq seen plus one.
    pub expected: u64,
    pub received: u64,
    pub missing: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SinkReport {
    /// Datagrams received per (service, subgroup).
    pub received: [[u64; 3]; 3],
    /// True event sizes received per (service, subgroup).
    pub bytes: [[u64; 3]; 3],
    pub received_total: u64,
    pub datagram_bytes: u64,
    /// Datagrams that failed to decode.
    pub malformed: u64,
    /// Datagrams whose uav was earlier seen in a different subgroup.
    pub subgroup_conflicts: u64,
    /// Unix time of the first and last valid datagram, seconds.
    pub first_arrival_unix_s: Option<f64>,
    pub last_arrival_unix_s: Option<f64>,
    /// Total missing sequence numbers across all streams.
    pub gaps: u64,
    /// Streams with at least one missing sequence number.
    pub gap_streams: Vec<StreamGap>,
}

#[derive(Default)]
struct Collector {
    report: SinkReport,
    uav_subgroup: HashMap<u32, Subgroup>,
    seqs: HashMap<(u32, ServiceClass), (u64, u64)>,
}

impl Collector {
    fn accept(&mut self, datagram: &[u8]) {
        let r = &mut self.report;
        let e = match decode_packet(datagram) {
            Ok(e) => e,
            Err(_) => {
                r.malformed += 1;
                return;
            }
        };
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        r.first_arrival_unix_s.get_or_insert(now);
        r.last_arrival_unix_s = Some(now);

        if *self.uav_subgroup.entry(e.uav_id).or_insert(e.subgroup) != e.subgroup {
            r.subgroup_conflicts += 1;
        }
        let (i, j) = (e.service.index(), e.subgroup.index());
        r.received[i][j] += 1;
        r.bytes[i][j] += e.size;
        r.received_total += 1;
        r.datagram_bytes += datagram.len() as u64;

        let s = self.seqs.entry((e.uav_id, e.service)).or_insert((0, 0));
        s.0 = s.0.max(e.seq + 1);
        s.1 += 1;
    }

    fn finish(mut self) -> SinkReport {
        let mut gaps: Vec<StreamGap> = self
            .seqs
            .into_iter()
            .filter(|(_, (expected, received))| received < expected)
            .map(|((uav_id, service), (expected, received))| StreamGap {
                uav_id,
                service,
                expected,
                received,
                missing: expected - received,
            })
            .collect();
        gaps.sort_by_key(|g| (g.uav_id, g.service));
        self.report.gaps = gaps.iter().map(|g| g.missing).sum();
        self.report.gap_streams = gaps;
        self.report
    }
}

/// A bound UDP receiver.
pub struct Sink {
    socket: UdpSocket,
}

impl Sink {
    pub fn bind(addr: SocketAddr) -> Result<Self, LoadgenError> {
        let socket = Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP))?;
        // Best effort: the kernel may clamp this.
        let _ = socket.set_recv_buffer_size(RECV_BUFFER_BYTES);
        socket.bind(&addr.into())?;
        let socket: UdpSocket = socket.into();
        socket.set_read_timeout(Some(POLL_INTERVAL))?;
        Ok(Self { socket })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Receives for `duration`, or until `stop` is raised, then reports.
    pub fn run(self, duration: Duration, stop: Option<&AtomicBool>) -> Result<SinkReport, LoadgenError> {
        let deadline = Instant::now() + duration;
        let mut collector = Collector::default();
        let mut buf = vec![0u8; 65_536];
        loop {
            if Instant::now() >= deadline || stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                break;
            }
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => collector.accept(&buf[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        // Drain whatever is already queued.
        self.socket.set_nonblocking(true)?;
        while let Ok((n, _)) = self.socket.recv_from(&mut buf) {
            collector.accept(&buf[..n]);
        }
        Ok(collector.finish())
    }
}

pub fn run_sink(bind: SocketAddr, duration: Duration) -> Result<SinkReport, LoadgenError> {
    Sink::bind(bind)?.run(duration, None)
}
