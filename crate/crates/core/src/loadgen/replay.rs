use std::net::{SocketAddr, UdpSocket};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::wire::{encode_into, Truncation};
use super::LoadgenError;
use crate::sim::PacketEvent;

pub const DEFAULT_MAX_LATENESS: Duration = Duration::from_millis(100);

// Sleep while the deadline is further away than this, then spin.
const SPIN_WINDOW: Duration = Duration::from_micros(1500);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Send each event at `timestamp / factor` after the start.
    Speedup(f64),
    AsFastAsPossible,
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub target: SocketAddr,
    pub pacing: Pacing,
    /// Abort once the sender has stayed more than this far behind schedule
    /// for at least this long.
    pub max_lateness: Duration,
    /// Use one paced sender per subgroup instead of a single sender.
    pub shard_by_subgroup: bool,
}

impl ReplayConfig {
    pub fn new(target: SocketAddr, pacing: Pacing) -> Self {
        Self {
            target,
            pacing,
            max_lateness: DEFAULT_MAX_LATENESS,
            shard_by_subgroup: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SendStats {
    /// Datagrams sent per (service, subgroup).
    pub sent: [[u64; 3]; 3],
    pub sent_total: u64,
    /// Sum of the events' true sizes.
    pub event_bytes: u64,
    /// Bytes actually put on the wire.
    pub datagram_bytes: u64,
    /// Events larger than one datagram, sent truncated.
    pub truncated: u64,
    pub max_lateness_s: f64,
    pub mean_lateness_s: f64,
    pub elapsed_s: f64,
}

impl SendStats {
    fn merge(&mut self, other: &SendStats) {
        let n = self.sent_total + other.sent_total;
        if n > 0 {
            self.mean_lateness_s = (self.mean_lateness_s * self.sent_total as f64
                + other.mean_lateness_s * other.sent_total as f64)
                / n as f64;
        }
        for i in 0..3 {
            for j in 0..3 {
                self.sent[i][j] += other.sent[i][j];
            }
        }
        self.sent_total = n;
        self.event_bytes += other.event_bytes;
        self.datagram_bytes += other.datagram_bytes;
        self.truncated += other.truncated;
        self.max_lateness_s = self.max_lateness_s.max(other.max_lateness_s);
        self.elapsed_s = self.elapsed_s.max(other.elapsed_s);
    }
}

fn wait_until(deadline: Instant) -> Instant {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return now;
        }
        let left = deadline - now;
        if left > SPIN_WINDOW {
            thread::sleep(left - SPIN_WINDOW);
        } else {
            std::hint::spin_loop();
        }
    }
}

/// One paced sender.
struct Sender {
    socket: UdpSocket,
    target: SocketAddr,
    start: Instant,
    speedup: Option<f64>,
    max_lateness: Duration,
    behind_since: Option<Instant>,
    lateness_sum: f64,
    buf: Vec<u8>,
    stats: SendStats,
}

impl Sender {
    fn new(cfg: &ReplayConfig, start: Instant) -> Result<Self, LoadgenError> {
        let bind: SocketAddr = if cfg.target.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let speedup = match cfg.pacing {
            Pacing::Speedup(x) => Some(x),
            Pacing::AsFastAsPossible => None,
        };
        Ok(Self {
            socket: UdpSocket::bind(bind)?,
            target: cfg.target,
            start,
            speedup,
            max_lateness: cfg.max_lateness,
            behind_since: None,
            lateness_sum: 0.0,
            buf: Vec::with_capacity(super::wire::MAX_DATAGRAM),
            stats: SendStats::default(),
        })
    }

    fn send(&mut self, e: &PacketEvent) -> Result<(), LoadgenError> {
        if let Some(speedup) = self.speedup {
            let deadline = self.start + Duration::from_secs_f64(e.timestamp_s() / speedup);
            let now = wait_until(deadline);
            let late = now - deadline;
            self.lateness_sum += late.as_secs_f64();
            self.stats.max_lateness_s = self.stats.max_lateness_s.max(late.as_secs_f64());
            if late > self.max_lateness {
                let since = *self.behind_since.get_or_insert(now);
                if now - since >= self.max_lateness {
                    return Err(LoadgenError::Lagging {
                        lateness_ms: late.as_secs_f64() * 1e3,
                        bound_ms: self.max_lateness.as_secs_f64() * 1e3,
                    });
                }
            } else {
                self.behind_since = None;
            }
        }

        self.buf.clear();
        encode_into(e, Truncation::Allow, &mut self.buf)?;
        self.socket.send_to(&self.buf, self.target)?;

        let s = &mut self.stats;
        s.sent[e.service.index()][e.subgroup.index()] += 1;
        s.sent_total += 1;
        s.event_bytes += e.size;
        s.datagram_bytes += self.buf.len() as u64;
        if e.size > super::wire::MAX_DATAGRAM as u64 {
            s.truncated += 1;
        }
        Ok(())
    }

    fn finish(mut self) -> SendStats {
        self.stats.elapsed_s = self.start.elapsed().as_secs_f64();
        if self.stats.sent_total > 0 {
            self.stats.mean_lateness_s = self.lateness_sum / self.stats.sent_total as f64;
        }
        self.stats
    }
}

fn check_order(prev: &mut Option<u64>, e: &PacketEvent) -> Result<(), LoadgenError> {
    if let Some(p) = *prev {
        if e.timestamp_us < p {
            return Err(LoadgenError::NotSorted {
                prev_us: p,
                next_us: e.timestamp_us,
            });
        }
    }
    *prev = Some(e.timestamp_us);
    Ok(())
}

/// Sends every event of a time-sorted trace to `cfg.target`, one datagram per
/// event, at wall time `timestamp / speedup` after the start.
pub fn replay_trace<I, E>(trace: I, cfg: &ReplayConfig) -> Result<SendStats, LoadgenError>
where
    I: IntoIterator<Item = Result<PacketEvent, E>>,
    LoadgenError: From<E>,
{
    if let Pacing::Speedup(x) = cfg.pacing {
        if !(x.is_finite() && x > 0.0) {
            return Err(LoadgenError::BadSpeedup(x));
        }
    }
    if cfg.shard_by_subgroup {
        return replay_sharded(trace, cfg);
    }

    let mut sender = Sender::new(cfg, Instant::now())?;
    let mut prev = None;
    for item in trace {
        let e = item?;
        check_order(&mut prev, &e)?;
        sender.send(&e)?;
    }
    Ok(sender.finish())
}

fn replay_sharded<I, E>(trace: I, cfg: &ReplayConfig) -> Result<SendStats, LoadgenError>
where
    I: IntoIterator<Item = Result<PacketEvent, E>>,
    LoadgenError: From<E>,
{
    let start = Instant::now();
    let senders = (0..3)
        .map(|_| Sender::new(cfg, start))
        .collect::<Result<Vec<_>, _>>()?;

    thread::scope(|scope| {
        let mut queues = Vec::with_capacity(3);
        let mut workers = Vec::with_capacity(3);
        for mut sender in senders {
            let (tx, rx) = mpsc::sync_channel::<PacketEvent>(4096);
            queues.push(tx);
            workers.push(scope.spawn(move || -> Result<SendStats, LoadgenError> {
                for e in rx {
                    sender.send(&e)?;
                }
                Ok(sender.finish())
            }));
        }

        let mut prev = None;
        let feed = || -> Result<(), LoadgenError> {
            for item in trace {
                let e = item?;
                check_order(&mut prev, &e)?;
                if queues[e.subgroup.index()].send(e).is_err() {
                    // The worker failed; its error is reported below.
                    break;
                }
            }
            Ok(())
        };
        let fed = feed();
        drop(queues);

        let mut total = SendStats::default();
        let mut first_err = fed.err();
        for w in workers {
            match w.join().expect("replay worker panicked") {
                Ok(s) => total.merge(&s),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    })
}
