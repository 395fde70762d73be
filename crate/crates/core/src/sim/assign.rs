use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::subgroup_range;
use crate::model::{Subgroup, SubgroupPartition};

/// Integer subgroup sizes. UAV ids are handed out contiguously: poor first,
/// then middle, then rich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavAssignment {
    pub counts: [u64; 3],
}

impl UavAssignment {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, group: Subgroup) -> u64 {
        self.counts[group.index()]
    }

    pub fn members(&self, group: Subgroup) -> Range<u64> {
        subgroup_range(&self.counts, group)
    }

    pub fn subgroup_of(&self, uav_id: u32) -> Option<Subgroup> {
        Subgroup::ALL
            .into_iter()
            .find(|g| self.members(*g).contains(&u64::from(uav_id)))
    }
}

/// Rounds `F_j · N` to integers with the largest-remainder method; ties go to
/// the lower subgroup index.
pub fn assign_uavs(n_uavs: u64, part: &SubgroupPartition) -> UavAssignment {
    let n = n_uavs as f64;
    let quotas = part.fractions.map(|f| f * n);
    let mut counts = quotas.map(|q| q.floor() as u64);
    let assigned: u64 = counts.iter().sum();
    let mut remaining = n_uavs.saturating_sub(assigned);

    let mut order = [0usize, 1, 2];
    // Stable sort keeps lower indices first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for j in order.into_iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[j] += 1;
        remaining -= 1;
    }
    UavAssignment { counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(f: [f64; 3]) -> SubgroupPartition {
        SubgroupPartition { fractions: f }
    }

    #[test]
    fn exact_products() {
        assert_eq!(assign_uavs(10, &part([0.2, 0.3, 0.5])).counts, [2, 3, 5]);
    }

    #[test]
    fn empty_swarm() {
        assert_eq!(assign_uavs(0, &part([0.2, 0.3, 0.5])).counts, [0, 0, 0]);
    }

    #[test]
    fn largest_remainder_goes_to_poor() {
        let a = assign_uavs(3, &part([0.146185, 0.043815, 0.81]));
        assert_eq!(a.counts, [1, 0, 2]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(assign_uavs(1, &part([0.5, 0.0, 0.5])).counts, [1, 0, 0]);
        assert_eq!(assign_uavs(2, &part([0.25, 0.5, 0.25])).counts, [1, 1, 0]);
    }

    #[test]
    fn membership_is_contiguous() {
        let a = assign_uavs(10, &part([0.2, 0.3, 0.5]));
        assert_eq!(a.members(Subgroup::Middle), 2..5);
        assert_eq!(a.subgroup_of(0), Some(Subgroup::Poor));
        assert_eq!(a.subgroup_of(4), Some(Subgroup::Middle));
        assert_eq!(a.subgroup_of(9), Some(Subgroup::Rich));
        assert_eq!(a.subgroup_of(10), None);
    }

    proptest::proptest! {
        #[test]
        fn counts_track_quotas(n in 0u64..100_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = part([lo, hi - lo, 1.0 - hi]);
            let asg = assign_uavs(n, &p);
            proptest::prop_assert_eq!(asg.total(), n);
            for j in 0..3 {
                let diff = asg.counts[j] as f64 - p.fractions[j] * n as f64;
                proptest::prop_assert!(diff.abs() < 1.0, "j={} diff={}", j, diff);
            }
        }
    }
}
