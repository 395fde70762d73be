use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::{PacketEvent, SimError, TraceSummary, UavAssignment};
use crate::model::{Grid, RateMatrix, ServiceClass, Subgroup, SubgroupPartition};
use crate::scenario::{ScenarioConfig, SizeKind, SizeModel};

pub const DEFAULT_MAX_EXPECTED_EVENTS: f64 = 1e9;

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Refuse scenarios expecting more events than this.
    pub max_expected_events: f64,
    /// Approximate number of events buffered per generation window.
    pub window_events: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_expected_events: DEFAULT_MAX_EXPECTED_EVENTS,
            window_events: 1_000_000.0,
        }
    }
}

/// Expected per-segment event counts `Λ_ij = n_j · T · λ_ij`.
pub fn expected_segment_counts(
    assignment: &UavAssignment,
    rates: &RateMatrix,
    duration_s: f64,
) -> Grid {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = assignment.counts[j] as f64 * duration_s * rates.lambda[i][j];
        }
    }
    out
}

/// Largest microsecond timestamp strictly below `duration_s`.
fn last_timestamp_us(duration_s: f64) -> u64 {
    ((duration_s * 1e6).ceil() as u64).saturating_sub(1)
}

struct ServiceStream {
    rng: ChaCha8Rng,
    rate: f64,
    size: SizeModel,
    next_s: f64,
    seq: u64,
}

impl ServiceStream {
    fn new(seed: u64, uav_id: u32, service: ServiceClass, rate: f64, size: SizeModel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(uav_id) * 3 + service.index() as u64);
        let mut s = Self {
            rng,
            rate,
            size,
            next_s: f64::INFINITY,
            seq: 0,
        };
        if rate > 0.0 {
            s.next_s = s.gap();
        }
        s
    }

    fn gap(&mut self) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / self.rate
    }

    fn draw_size(&mut self) -> u64 {
        match self.size.kind {
            SizeKind::Deterministic => self.size.mean.round() as u64,
            SizeKind::Exponential => {
                let e: f64 = self.rng.sample(Exp1);
                (e * self.size.mean).round() as u64
            }
        }
    }

    /// Calls `emit(timestamp_us, seq, size)` for every arrival before
    /// `duration_s` whose microsecond timestamp is below `end_us`.
    fn advance(&mut self, duration_s: f64, end_us: u64, mut emit: impl FnMut(u64, u64, u64)) {
        let last_us = last_timestamp_us(duration_s);
        while self.next_s < duration_s {
            // Rounding in the product can land exactly on T; keep it below.
            let ts = ((self.next_s * 1e6) as u64).min(last_us);
            if ts >= end_us {
                break;
            }
            let size = self.draw_size();
            emit(ts, self.seq, size);
            self.seq += 1;
            self.next_s += self.gap();
        }
    }
}

struct UavStreams {
    uav_id: u32,
    subgroup: Subgroup,
    services: [ServiceStream; 3],
}

impl UavStreams {
    fn new(config: &ScenarioConfig, rates: &RateMatrix, uav_id: u32, subgroup: Subgroup) -> Self {
        let services = ServiceClass::ALL.map(|c| {
            ServiceStream::new(
                config.seed,
                uav_id,
                c,
                rates.get(c, subgroup),
                config.sizes[c.index()],
            )
        });
        Self {
            uav_id,
            subgroup,
            services,
        }
    }

    fn advance(&mut self, duration_s: f64, end_us: u64, out: &mut Vec<PacketEvent>) {
        let (uav_id, subgroup) = (self.uav_id, self.subgroup);
        for (c, stream) in ServiceClass::ALL.into_iter().zip(&mut self.services) {
            stream.advance(duration_s, end_us, |timestamp_us, seq, size| {
                out.push(PacketEvent {
                    timestamp_us,
                    uav_id,
                    subgroup,
                    service: c,
                    seq,
                    size,
                })
            });
        }
    }
}

fn check_inputs(
    config: &ScenarioConfig,
    part: &SubgroupPartition,
    rates: &RateMatrix,
    assignment: &UavAssignment,
    opts: &SimOptions,
) -> Result<f64, SimError> {
    if assignment.total() != config.n_uavs {
        return Err(SimError::Inconsistent(format!(
            "assignment covers {} UAVs but the scenario has {}",
            assignment.total(),
            config.n_uavs
        )));
    }
    if config.n_uavs > u64::from(u32::MAX) {
        return Err(SimError::Inconsistent(format!(
            "{} UAVs do not fit 32-bit ids",
            config.n_uavs
        )));
    }
    for j in 0..3 {
        let quota = part.fractions[j] * config.n_uavs as f64;
        if (assignment.counts[j] as f64 - quota).abs() >= 1.0 {
            return Err(SimError::Inconsistent(format!(
                "subgroup {j} holds {} UAVs, quota is {quota}",
                assignment.counts[j]
            )));
        }
    }
    if rates.lambda.iter().flatten().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(SimError::Inconsistent("rates must be finite and non-negative".into()));
    }
    if !(config.duration_s.is_finite() && config.duration_s >= 0.0) {
        return Err(SimError::Inconsistent(format!(
            "duration must be finite and non-negative, got {}",
            config.duration_s
        )));
    }
    let expected: f64 = expected_segment_counts(assignment, rates, config.duration_s)
        .iter()
        .flatten()
        .sum();
    if expected > opts.max_expected_events {
        return Err(SimError::Capacity {
            expected,
            cap: opts.max_expected_events,
        });
    }
    Ok(expected)
}

fn build_streams(
    config: &ScenarioConfig,
    rates: &RateMatrix,
    assignment: &UavAssignment,
) -> Vec<UavStreams> {
    Subgroup::ALL
        .into_iter()
        .flat_map(|g| assignment.members(g).map(move |id| (id as u32, g)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(id, g)| UavStreams::new(config, rates, id, g))
        .collect()
}

/// Canonically ordered event stream, generated window by window.
///
/// Each window is a half-open range of microsecond timestamps; the streams of
/// all UAVs are advanced to the window end in parallel and the window's events
/// are sorted by `(timestamp, uav_id, service, seq)` before being handed out.
pub struct EventStream {
    uavs: Vec<UavStreams>,
    duration_s: f64,
    window_us: u64,
    horizon_us: u64,
    next_start_us: u64,
    buffer: std::vec::IntoIter<PacketEvent>,
}

impl EventStream {
    fn fill(&mut self) -> bool {
        while self.next_start_us < self.horizon_us {
            let end_us = self.next_start_us.saturating_add(self.window_us).min(self.horizon_us);
            self.next_start_us = end_us;
            let duration_s = self.duration_s;
            let mut events: Vec<PacketEvent> = self
                .uavs
                .par_chunks_mut(64)
                .flat_map_iter(|chunk| {
                    let mut local = Vec::new();
                    for u in chunk {
                        u.advance(duration_s, end_us, &mut local);
                    }
                    local
                })
                .collect();
            if events.is_empty() {
                continue;
            }
            events.par_sort_unstable_by_key(PacketEvent::order_key);
            self.buffer = events.into_iter();
            return true;
        }
        false
    }
}

impl Iterator for EventStream {
    type Item = PacketEvent;

    fn next(&mut self) -> Option<PacketEvent> {
        loop {
            if let Some(e) = self.buffer.next() {
                return Some(e);
            }
            if !self.fill() {
                return None;
            }
        }
    }
}

/// Generates the full trace of a scenario with default options.
pub fn generate_events(
    config: &ScenarioConfig,
    part: &SubgroupPartition,
    rates: &RateMatrix,
    assignment: &UavAssignment,
) -> Result<EventStream, SimError> {
    generate_events_with(config, part, rates, assignment, &SimOptions::default())
}

pub fn generate_events_with(
    config: &ScenarioConfig,
    part: &SubgroupPartition,
    rates: &RateMatrix,
    assignment: &UavAssignment,
    opts: &SimOptions,
) -> Result<EventStream, SimError> {
    let expected = check_inputs(config, part, rates, assignment, opts)?;
    // Every timestamp is at most floor(T · 1e6), so one past that covers [0, T).
    let horizon_us = (config.duration_s * 1e6).floor() as u64 + 1;
    let windows = (expected / opts.window_events.max(1.0)).ceil().max(1.0) as u64;
    let window_us = horizon_us.div_ceil(windows).max(1);
    Ok(EventStream {
        uavs: build_streams(config, rates, assignment),
        duration_s: config.duration_s,
        window_us,
        horizon_us,
        next_start_us: 0,
        buffer: Vec::new().into_iter(),
    })
}

/// Per-segment counts and bytes of the trace `generate_events` would produce,
/// computed by parallel partial sums without ordering the events.
pub fn simulate_summary(
    config: &ScenarioConfig,
    part: &SubgroupPartition,
    rates: &RateMatrix,
    assignment: &UavAssignment,
) -> Result<TraceSummary, SimError> {
    simulate_summary_with(config, part, rates, assignment, &SimOptions::default())
}

pub fn simulate_summary_with(
    config: &ScenarioConfig,
    part: &SubgroupPartition,
    rates: &RateMatrix,
    assignment: &UavAssignment,
    opts: &SimOptions,
) -> Result<TraceSummary, SimError> {
    check_inputs(config, part, rates, assignment, opts)?;
    let duration_s = config.duration_s;
    let (count, bytes) = Subgroup::ALL
        .into_iter()
        .flat_map(|g| assignment.members(g).map(move |id| (id as u32, g)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .fold(
            || ([[0u64; 3]; 3], [[0u64; 3]; 3]),
            |(mut count, mut bytes), (id, g)| {
                let mut uav = UavStreams::new(config, rates, id, g);
                let j = g.index();
                for (i, stream) in uav.services.iter_mut().enumerate() {
                    stream.advance(duration_s, u64::MAX, |_, _, size| {
                        count[i][j] += 1;
                        bytes[i][j] += size;
                    });
                }
                (count, bytes)
            },
        )
        .reduce(
            || ([[0u64; 3]; 3], [[0u64; 3]; 3]),
            |(mut c1, mut b1), (c2, b2)| {
                for i in 0..3 {
                    for j in 0..3 {
                        c1[i][j] += c2[i][j];
                        b1[i][j] += b2[i][j];
                    }
                }
                (c1, b1)
            },
        );
    Ok(TraceSummary::from_grids(count, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, SolvedModel};
    use crate::scenario::SizeModel;
    use crate::sim::{assign_uavs, summarize_trace};

    fn config(n_uavs: u64, duration_s: f64, seed: u64) -> ScenarioConfig {
        let w = [100.0, 500.0, 70_000.0];
        ScenarioConfig {
            name: "test".into(),
            n_uavs,
            duration_s,
            seed,
            model: ModelParams {
                alpha: [2.0, 3.0, 2.0],
                gamma: [0.6, 0.3, 0.1],
                w_bytes: w,
                q_stream: 0.9,
                q_iot: 0.9,
                lambda_11: 2.0,
            },
            sizes: w.map(SizeModel::deterministic),
            notes: vec![],
        }
    }

    fn run(c: &ScenarioConfig, opts: &SimOptions) -> Vec<PacketEvent> {
        let m = SolvedModel::solve(&c.model).unwrap();
        let a = assign_uavs(c.n_uavs, &m.partition);
        generate_events_with(c, &m.partition, &m.rates, &a, opts)
            .unwrap()
            .collect()
    }

    #[test]
    fn empty_swarm_emits_nothing() {
        assert!(run(&config(0, 10.0, 1), &SimOptions::default()).is_empty());
    }

    #[test]
    fn same_seed_same_stream() {
        let c = config(20, 5.0, 42);
        let a = run(&c, &SimOptions::default());
        let b = run(&c, &SimOptions::default());
        assert!(!a.is_empty());
        assert_eq!(a, b);
        let other = run(&config(20, 5.0, 43), &SimOptions::default());
        assert_ne!(a, other);
    }

    #[test]
    fn window_size_does_not_change_the_stream() {
        let c = config(20, 5.0, 7);
        let big = run(&c, &SimOptions::default());
        let small = run(
            &c,
            &SimOptions {
                window_events: 37.0,
                ..SimOptions::default()
            },
        );
        assert_eq!(big, small);
    }

    #[test]
    fn stream_is_ordered_and_bounded() {
        let c = config(15, 3.5, 9);
        let events = run(&c, &SimOptions::default());
        assert!(events.windows(2).all(|w| w[0].order_key() < w[1].order_key()));
        assert!(events.iter().all(|e| e.timestamp_s() < 3.5));
        let mut last = std::collections::HashMap::new();
        for e in &events {
            if let Some(prev) = last.insert((e.uav_id, e.service), e.seq) {
                assert_eq!(e.seq, prev + 1);
            } else {
                assert_eq!(e.seq, 0);
            }
        }
    }

    #[test]
    fn parallel_summary_matches_stream_summary() {
        let c = config(30, 4.0, 5);
        let m = SolvedModel::solve(&c.model).unwrap();
        let a = assign_uavs(c.n_uavs, &m.partition);
        let from_stream =
            summarize_trace(generate_events(&c, &m.partition, &m.rates, &a).unwrap()).unwrap();
        let direct = simulate_summary(&c, &m.partition, &m.rates, &a).unwrap();
        assert_eq!(from_stream, direct);
    }

    #[test]
    fn capacity_cap_is_enforced() {
        let c = config(100, 1000.0, 1);
        let m = SolvedModel::solve(&c.model).unwrap();
        let a = assign_uavs(c.n_uavs, &m.partition);
        let opts = SimOptions {
            max_expected_events: 1000.0,
            ..SimOptions::default()
        };
        assert!(matches!(
            generate_events_with(&c, &m.partition, &m.rates, &a, &opts),
            Err(SimError::Capacity { .. })
        ));
    }

    #[test]
    fn mismatched_assignment_is_rejected() {
        let c = config(10, 1.0, 1);
        let m = SolvedModel::solve(&c.model).unwrap();
        let a = assign_uavs(11, &m.partition);
        assert!(matches!(
            generate_events(&c, &m.partition, &m.rates, &a),
            Err(SimError::Inconsistent(_))
        ));
    }

    // Single UAV at 2 packets/s for 1000 s, averaged over 100 seeds: the mean
    // count has standard deviation sqrt(2000 / 100), so 3σ ≈ 13.4.
    #[test]
    fn poisson_mean_over_seeds() {
        let size = SizeModel::deterministic(10.0);
        let total: u64 = (0..100u64)
            .map(|seed| {
                let mut s = ServiceStream::new(seed, 0, ServiceClass::Telemetry, 2.0, size);
                let mut n = 0u64;
                s.advance(1000.0, u64::MAX, |_, _, _| n += 1);
                n
            })
            .sum();
        let mean = total as f64 / 100.0;
        let band = 3.0 * (2000.0f64 * 100.0).sqrt() / 100.0;
        assert!((mean - 2000.0).abs() <= band, "mean {mean}, band {band}");
    }

    #[test]
    fn exponential_sizes_have_the_right_mean() {
        let size = SizeModel {
            kind: SizeKind::Exponential,
            mean: 1000.0,
        };
        let mut s = ServiceStream::new(3, 0, ServiceClass::Iot, 1.0, size);
        let n = 200_000;
        let total: u64 = (0..n).map(|_| s.draw_size()).sum();
        let mean = total as f64 / n as f64;
        // σ of the mean is 1000/sqrt(n) ≈ 2.2.
        assert!((mean - 1000.0).abs() < 12.0, "{mean}");
    }
}
