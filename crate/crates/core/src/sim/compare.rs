use serde::{Deserialize, Serialize};

use super::TraceSummary;
use crate::model::{Grid, ServiceClass, Subgroup, TrafficForecast};

/// Segments whose |z| exceeds this are flagged as outliers.
pub const OUTLIER_Z: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentComparison {
    pub service: ServiceClass,
    pub subgroup: Subgroup,
    /// Λ_ij, expected packets.
    pub expected: f64,
    pub observed: u64,
    pub observed_bytes: u64,
    /// (observed − expected) / expected; absent when nothing is expected.
    pub rel_err: Option<f64>,
    /// (observed − expected) / √expected; absent when nothing is expected.
    pub z: Option<f64>,
    pub degenerate: bool,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceComparison {
    pub service: ServiceClass,
    pub expected_packets: f64,
    pub observed_packets: u64,
    pub packets_rel_err: Option<f64>,
    pub expected_bytes: f64,
    pub observed_bytes: u64,
    pub bytes_rel_err: Option<f64>,
}

/// Theory against simulation, per segment and per service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub segments: Vec<SegmentComparison>,
    pub services: Vec<ServiceComparison>,
    pub outliers: usize,
}

impl ComparisonReport {
    pub fn segment(&self, service: ServiceClass, group: Subgroup) -> &SegmentComparison {
        &self.segments[service.index() * 3 + group.index()]
    }

    pub fn service(&self, service: ServiceClass) -> &ServiceComparison {
        &self.services[service.index()]
    }
}

fn rel_err(observed: f64, expected: f64) -> Option<f64> {
    (expected > 0.0).then(|| (observed - expected) / expected)
}

pub fn compare_forecast(
    forecast: &TrafficForecast,
    expected_segments: &Grid,
    summary: &TraceSummary,
) -> ComparisonReport {
    let mut segments = Vec::with_capacity(9);
    for c in ServiceClass::ALL {
        for g in Subgroup::ALL {
            let expected = expected_segments[c.index()][g.index()];
            let observed = summary.count(c, g);
            let degenerate = !(expected > 0.0);
            let z = (!degenerate).then(|| (observed as f64 - expected) / expected.sqrt());
            let outlier = match z {
                Some(z) => z.abs() > OUTLIER_Z,
                None => observed > 0,
            };
            segments.push(SegmentComparison {
                service: c,
                subgroup: g,
                expected,
                observed,
                observed_bytes: summary.bytes(c, g),
                rel_err: rel_err(observed as f64, expected),
                z,
                degenerate,
                outlier,
            });
        }
    }
    let services = ServiceClass::ALL
        .into_iter()
        .map(|c| {
            let i = c.index();
            ServiceComparison {
                service: c,
                expected_packets: forecast.packets[i],
                observed_packets: summary.service_count[i],
                packets_rel_err: rel_err(summary.service_count[i] as f64, forecast.packets[i]),
                expected_bytes: forecast.bytes[i],
                observed_bytes: summary.service_bytes[i],
                bytes_rel_err: rel_err(summary.service_bytes[i] as f64, forecast.bytes[i]),
            }
        })
        .collect();
    let outliers = segments.iter().filter(|s| s.outlier).count();
    ComparisonReport {
        segments,
        services,
        outliers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forecast(packets: [f64; 3], w: [f64; 3]) -> TrafficForecast {
        let bytes = [packets[0] * w[0], packets[1] * w[1], packets[2] * w[2]];
        TrafficForecast {
            n_uavs: 1,
            duration_s: 1.0,
            packets,
            bytes,
            total_bytes: bytes.iter().sum(),
        }
    }

    #[test]
    fn exact_match_has_zero_error() {
        let expected = [[100.0, 200.0, 300.0], [10.0, 20.0, 30.0], [1.0, 2.0, 3.0]];
        let count = expected.map(|r| r.map(|x| x as u64));
        let bytes = count.map(|r| r.map(|x| x * 10));
        let summary = TraceSummary::from_grids(count, bytes);
        let f = forecast([600.0, 60.0, 6.0], [10.0; 3]);
        let r = compare_forecast(&f, &expected, &summary);
        assert!(r.segments.iter().all(|s| s.z == Some(0.0) && s.rel_err == Some(0.0)));
        assert!(r.services.iter().all(|s| s.packets_rel_err == Some(0.0)));
        assert!(r.services.iter().all(|s| s.bytes_rel_err == Some(0.0)));
        assert_eq!(r.outliers, 0);
    }

    #[test]
    fn z_score_of_two() {
        let mut expected = [[0.0; 3]; 3];
        expected[0][0] = 10_000.0;
        let mut count = [[0; 3]; 3];
        count[0][0] = 10_200;
        let summary = TraceSummary::from_grids(count, [[0; 3]; 3]);
        let r = compare_forecast(&forecast([10_000.0, 0.0, 0.0], [0.0; 3]), &expected, &summary);
        let s = r.segment(ServiceClass::Telemetry, Subgroup::Poor);
        assert!((s.z.unwrap() - 2.0).abs() < 1e-12);
        assert!((s.rel_err.unwrap() - 0.02).abs() < 1e-12);
        assert!(!s.outlier);
    }

    #[test]
    fn zero_rate_segment_is_degenerate() {
        let r = compare_forecast(
            &forecast([0.0; 3], [0.0; 3]),
            &[[0.0; 3]; 3],
            &TraceSummary::default(),
        );
        for s in &r.segments {
            assert!(s.degenerate);
            assert_eq!(s.z, None);
            assert_eq!(s.rel_err, None);
            assert!(!s.outlier);
        }
        assert_eq!(r.services[0].packets_rel_err, None);
    }

    #[test]
    fn large_deviation_is_an_outlier() {
        let mut expected = [[0.0; 3]; 3];
        expected[2][2] = 100.0;
        let mut count = [[0; 3]; 3];
        count[2][2] = 141;
        let summary = TraceSummary::from_grids(count, [[0; 3]; 3]);
        let r = compare_forecast(&forecast([0.0, 0.0, 100.0], [0.0; 3]), &expected, &summary);
        assert!(r.segment(ServiceClass::Streaming, Subgroup::Rich).outlier);
        assert_eq!(r.outliers, 1);
    }
}
