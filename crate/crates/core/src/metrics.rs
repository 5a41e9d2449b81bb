//! Availability and battery-life statistics.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::TxMode;
use crate::tms::ModeAssignment;
use crate::Result;

/// Battery life required of a device, days (ten years).
pub const BATTERY_LIFE_REQUIREMENT_DAYS: f64 = 3650.0;

/// Fraction of devices that can deliver their uplink reports. A remote
/// counts as served only when its pairing was established; assignments keep
/// unpaired candidates as cellular or unreachable, so mode alone decides.
pub fn availability(assignments: &[ModeAssignment]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(SimError::InvalidInput(
            "availability undefined for an empty device set".into(),
        ));
    }
    let served = assignments
        .iter()
        .filter(|a| a.mode != TxMode::Unreachable)
        .count();
    Ok(served as f64 / assignments.len() as f64)
}

/// Empirical battery-life CDF at device granularity: one point per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryCdf {
    /// (battery life in days, cumulative fraction), non-decreasing in both.
    pub points: Vec<(f64, f64)>,
    /// Fraction of devices meeting the battery-life requirement.
    pub frac_meeting: f64,
    pub threshold_days: f64,
}

pub fn battery_cdf(lives_days: &[f64], threshold_days: f64) -> Result<BatteryCdf> {
    if lives_days.is_empty() {
        return Err(SimError::InvalidInput(
            "battery CDF undefined for an empty report set".into(),
        ));
    }
    let mut sorted = lives_days.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &life)| (life, (i + 1) as f64 / n))
        .collect();
    let meeting = sorted.iter().filter(|&&l| l >= threshold_days).count() as f64 / n;
    Ok(BatteryCdf {
        points,
        frac_meeting: meeting,
        threshold_days,
    })
}

/// Hex SHA-256 of the canonical run-config encoding.
pub fn config_fingerprint(canonical_json: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(canonical_json);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Everything one run reduces to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Method label (a clustering method or `baseline`).
    pub label: String,
    pub availability: f64,
    pub frac_meeting_10y: f64,
    /// Cluster count used by the run (absent for the baseline).
    pub k_clusters: Option<usize>,
    pub config_fingerprint: String,
    pub mode_histogram: ModeHistogram,
    /// Per-device battery-life CDF, (days, cumulative fraction).
    pub cdf_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeHistogram {
    pub cellular: usize,
    pub relay: usize,
    pub remote: usize,
    pub unreachable: usize,
}

impl ModeHistogram {
    pub fn of(assignments: &[ModeAssignment]) -> Self {
        let mut h = ModeHistogram::default();
        for a in assignments {
            match a.mode {
                TxMode::Cellular => h.cellular += 1,
                TxMode::Relay => h.relay += 1,
                TxMode::Remote => h.remote += 1,
                TxMode::Unreachable => h.unreachable += 1,
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tms::ProjectedLife;

    fn assignment(id: u32, mode: TxMode) -> ModeAssignment {
        ModeAssignment {
            device_id: id,
            mode,
            paired_relay: (mode == TxMode::Remote).then_some(0),
            projected_life: ProjectedLife::Days(1000.0),
        }
    }

    #[test]
    fn availability_is_served_over_total() {
        let mut a: Vec<ModeAssignment> = (0..86).map(|i| assignment(i, TxMode::Cellular)).collect();
        a.extend((86..100).map(|i| assignment(i, TxMode::Unreachable)));
        assert_eq!(availability(&a).unwrap(), 0.86);
        let all: Vec<ModeAssignment> = (0..10).map(|i| assignment(i, TxMode::Cellular)).collect();
        assert_eq!(availability(&all).unwrap(), 1.0);
        assert!(availability(&[]).is_err());
    }

    #[test]
    fn availability_matches_exhaustive_recount() {
        use rand::Rng;
        let mut rng = crate::seeds::stream_rng(2, 0x11);
        let modes = [TxMode::Cellular, TxMode::Relay, TxMode::Remote, TxMode::Unreachable];
        let a: Vec<ModeAssignment> = (0..500)
            .map(|i| assignment(i, modes[rng.random_range(0..4)]))
            .collect();
        let mut count = 0usize;
        for x in &a {
            if x.mode != TxMode::Unreachable {
                count += 1;
            }
        }
        assert_eq!(availability(&a).unwrap(), count as f64 / 500.0);
    }

    #[test]
    fn cdf_single_value_is_one_step() {
        let cdf = battery_cdf(&[42.0, 42.0, 42.0], 3650.0).unwrap();
        assert_eq!(cdf.points.len(), 3);
        assert!(cdf.points.iter().all(|&(l, _)| l == 42.0));
        assert_eq!(cdf.points.last().unwrap().1, 1.0);
        assert_eq!(cdf.frac_meeting, 0.0);
    }

    #[test]
    fn cdf_is_monotone_and_normalized() {
        use rand::Rng;
        let mut rng = crate::seeds::stream_rng(3, 0x12);
        let lives: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..9000.0)).collect();
        let cdf = battery_cdf(&lives, 3650.0).unwrap();
        for w in cdf.points.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
        assert_eq!(cdf.points.last().unwrap().1, 1.0);
        // Recount oracle for the compliance fraction.
        let meeting = lives.iter().filter(|&&l| l >= 3650.0).count() as f64 / 200.0;
        assert_eq!(cdf.frac_meeting, meeting);
        assert!(battery_cdf(&[], 3650.0).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let a = config_fingerprint(b"{\"seed\":1}");
        let b = config_fingerprint(b"{\"seed\":1}");
        let c = config_fingerprint(b"{\"seed\":2}");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }
}
