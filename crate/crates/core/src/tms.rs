//! Transmission mode selection.
//!
//! Per cluster, every member is projected onto a cellular battery life (its
//! remaining charge over the daily energy an all-cellular schedule would
//! cost). Members whose projected life falls short of the battery-life
//! threshold become remote candidates; members that clear the threshold
//! *and* whose cellular SNR clears the relay SNR threshold form the feasible
//! relay list. Devices that cannot reach the base station at all count as
//! consuming infinite energy, so they are always remote candidates.
//!
//! Each remote candidate is paired with the admissible feasible relay of
//! minimum D2D pathloss (ties toward the lower device id); pairs the base
//! station has seen rejected before are never re-offered. Candidates with no
//! admissible relay fall back to cellular when their link still carries data
//! and are unreachable otherwise. Devices inside the inner circle are always
//! cellular.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{NodeId, RadioLink};
use crate::clustering::Cluster;
use crate::energy::{cellular_daily_energy_j, PowerModel};
use crate::error::SimError;
use crate::geometry::{Device, DeviceId, TxMode};
use crate::protocol::TrafficOrigin;
use crate::Result;

/// How a relay is chosen among the admissible candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayChoice {
    /// Minimum D2D pathloss (maximizes the D2D rate).
    MinD2dPathloss,
    /// Maximum cellular SNR of the relay.
    MaxCellularSnr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TmsPolicy {
    /// Required battery life, days.
    pub battery_life_threshold_days: f64,
    /// Minimum cellular SNR for relays, dB.
    pub relay_snr_threshold_db: f64,
    /// Admission bound for a D2D pairing, dB.
    pub d2d_pathloss_max_db: f64,
    /// Time between mode-selection rounds, seconds.
    pub update_interval_s: f64,
    pub relay_choice: RelayChoice,
    /// Optional cap on remotes per relay; unlimited when absent.
    pub max_remotes_per_relay: Option<u32>,
}

impl Default for TmsPolicy {
    fn default() -> Self {
        TmsPolicy {
            battery_life_threshold_days: 3650.0,
            relay_snr_threshold_db: 3.0,
            d2d_pathloss_max_db: 136.0,
            update_interval_s: 86_400.0,
            relay_choice: RelayChoice::MinD2dPathloss,
            max_remotes_per_relay: None,
        }
    }
}

impl TmsPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.battery_life_threshold_days > 0.0 && self.battery_life_threshold_days.is_finite())
        {
            return Err(SimError::Config(
                "tms.battery_life_threshold_days must be finite and positive".into(),
            ));
        }
        if !self.relay_snr_threshold_db.is_finite() || !self.d2d_pathloss_max_db.is_finite() {
            return Err(SimError::Config("tms thresholds must be finite".into()));
        }
        if !(self.update_interval_s > 0.0) {
            return Err(SimError::Config("tms.update_interval_s must be positive".into()));
        }
        Ok(())
    }
}

/// Projected battery life; `InfiniteConsumption` marks devices that cannot
/// reach the base station and therefore fail any life requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "days", rename_all = "snake_case")]
pub enum ProjectedLife {
    Days(f64),
    InfiniteConsumption,
}

impl ProjectedLife {
    /// Life in days; the infinite-consumption marker reads as zero.
    pub fn days(&self) -> f64 {
        match self {
            ProjectedLife::Days(d) => *d,
            ProjectedLife::InfiniteConsumption => 0.0,
        }
    }

    pub fn meets(&self, threshold_days: f64) -> bool {
        match self {
            ProjectedLife::Days(d) => *d >= threshold_days,
            ProjectedLife::InfiniteConsumption => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub device_id: DeviceId,
    pub mode: TxMode,
    pub paired_relay: Option<DeviceId>,
    pub projected_life: ProjectedLife,
}

/// Energy-model inputs the projection needs.
#[derive(Debug, Clone, Copy)]
pub struct EnergyContext<'a> {
    pub model: &'a PowerModel,
    pub control_bits: u64,
    pub origin: TrafficOrigin,
}

/// Projected battery life if the device served all reports over its
/// cellular link for the whole update interval.
pub fn projected_cellular_life(
    dev: &Device,
    link: &RadioLink,
    ctx: &EnergyContext<'_>,
) -> ProjectedLife {
    if link.rate_bps <= 0.0 {
        return ProjectedLife::InfiniteConsumption;
    }
    let daily = cellular_daily_energy_j(
        link.rate_bps,
        &dev.traffic,
        ctx.control_bits,
        ctx.origin,
        dev.max_tx_power_dbm,
        ctx.model,
    );
    if daily <= 0.0 {
        return ProjectedLife::Days(f64::INFINITY);
    }
    ProjectedLife::Days(dev.battery_j / daily)
}

/// Intermediate per-cluster classification.
#[derive(Debug, Clone, Default)]
pub struct ClusterClassification {
    pub remote_candidates: Vec<DeviceId>,
    pub feasible_relays: Vec<DeviceId>,
    pub lives: BTreeMap<DeviceId, ProjectedLife>,
}

/// Splits cluster members into remote candidates, feasible relays and the
/// cellular rest. Exact-equality devices are neither remotes nor relays.
pub fn classify_members(
    members: &[DeviceId],
    devices: &BTreeMap<DeviceId, &Device>,
    links: &BTreeMap<DeviceId, &RadioLink>,
    policy: &TmsPolicy,
    ctx: &EnergyContext<'_>,
) -> Result<ClusterClassification> {
    let mut out = ClusterClassification::default();
    for id in members {
        let dev = devices
            .get(id)
            .ok_or_else(|| SimError::contract("tms", format!("unknown device {id} in cluster")))?;
        let link = links
            .get(id)
            .ok_or_else(|| SimError::contract("tms", format!("device {id} has no cellular link")))?;
        let life = projected_cellular_life(dev, link, ctx);
        out.lives.insert(*id, life);
        let below = match life {
            ProjectedLife::Days(d) => d < policy.battery_life_threshold_days,
            ProjectedLife::InfiniteConsumption => true,
        };
        let above = matches!(life, ProjectedLife::Days(d) if d > policy.battery_life_threshold_days);
        if below {
            out.remote_candidates.push(*id);
        } else if above && link.snr_db >= policy.relay_snr_threshold_db {
            out.feasible_relays.push(*id);
        }
    }
    Ok(out)
}

/// Candidate relay seen from one remote.
#[derive(Debug, Clone, Copy)]
pub struct RelayCandidate {
    pub relay: DeviceId,
    pub d2d_pathloss_db: f64,
    pub cellular_snr_db: f64,
}

/// Picks a relay for one remote among the feasible candidates, honoring the
/// admission bound, previously rejected pairs and the per-relay cap.
/// Returns `None` when no admissible relay remains.
pub fn select_relay(
    remote: DeviceId,
    candidates: &[RelayCandidate],
    policy: &TmsPolicy,
    excluded: &BTreeSet<(DeviceId, DeviceId)>,
    load: &BTreeMap<DeviceId, u32>,
) -> Option<DeviceId> {
    let cap = policy.max_remotes_per_relay.unwrap_or(u32::MAX);
    let mut best: Option<&RelayCandidate> = None;
    for c in candidates {
        if c.d2d_pathloss_db > policy.d2d_pathloss_max_db {
            continue;
        }
        if excluded.contains(&(remote, c.relay)) {
            continue;
        }
        if load.get(&c.relay).copied().unwrap_or(0) >= cap {
            continue;
        }
        best = Some(match (best, policy.relay_choice) {
            (None, _) => c,
            (Some(b), RelayChoice::MinD2dPathloss) => {
                if c.d2d_pathloss_db < b.d2d_pathloss_db
                    || (c.d2d_pathloss_db == b.d2d_pathloss_db && c.relay < b.relay)
                {
                    c
                } else {
                    b
                }
            }
            (Some(b), RelayChoice::MaxCellularSnr) => {
                if c.cellular_snr_db > b.cellular_snr_db
                    || (c.cellular_snr_db == b.cellular_snr_db && c.relay < b.relay)
                {
                    c
                } else {
                    b
                }
            }
        });
    }
    best.map(|c| c.relay)
}

/// Classifies one cluster end to end: member split, relay selection and the
/// cellular/unreachable fallback for unpaired candidates.
pub fn classify_cluster<F>(
    cluster: &Cluster,
    devices: &BTreeMap<DeviceId, &Device>,
    links: &BTreeMap<DeviceId, &RadioLink>,
    d2d_pathloss: &F,
    policy: &TmsPolicy,
    ctx: &EnergyContext<'_>,
    excluded: &BTreeSet<(DeviceId, DeviceId)>,
) -> Result<Vec<ModeAssignment>>
where
    F: Fn(DeviceId, DeviceId) -> f64 + Sync,
{
    let split = classify_members(&cluster.members, devices, links, policy, ctx)?;
    let mut assignment: BTreeMap<DeviceId, ModeAssignment> = cluster
        .members
        .iter()
        .map(|id| {
            (
                *id,
                ModeAssignment {
                    device_id: *id,
                    mode: TxMode::Cellular,
                    paired_relay: None,
                    projected_life: split.lives[id],
                },
            )
        })
        .collect();

    let mut load: BTreeMap<DeviceId, u32> = BTreeMap::new();
    for remote in &split.remote_candidates {
        let candidates: Vec<RelayCandidate> = split
            .feasible_relays
            .iter()
            .map(|&relay| RelayCandidate {
                relay,
                d2d_pathloss_db: d2d_pathloss(*remote, relay),
                cellular_snr_db: links[&relay].snr_db,
            })
            .collect();
        match select_relay(*remote, &candidates, policy, excluded, &load) {
            Some(relay) => {
                *load.entry(relay).or_insert(0) += 1;
                let a = assignment.get_mut(remote).expect("member");
                a.mode = TxMode::Remote;
                a.paired_relay = Some(relay);
            }
            None => {
                let a = assignment.get_mut(remote).expect("member");
                if links[remote].rate_bps > 0.0 {
                    a.mode = TxMode::Cellular;
                } else {
                    a.mode = TxMode::Unreachable;
                }
            }
        }
    }
    for (relay, n) in &load {
        if *n > 0 {
            assignment.get_mut(relay).expect("member").mode = TxMode::Relay;
        }
    }
    Ok(assignment.into_values().collect())
}

/// Runs mode selection over all clusters and emits one assignment per
/// device. Devices in no cluster (inside the inner circle) are cellular.
pub fn tms_round<F>(
    clusters: &[Cluster],
    devices: &[Device],
    links: &[RadioLink],
    d2d_pathloss: &F,
    policy: &TmsPolicy,
    ctx: &EnergyContext<'_>,
    excluded: &BTreeSet<(DeviceId, DeviceId)>,
) -> Result<Vec<ModeAssignment>>
where
    F: Fn(DeviceId, DeviceId) -> f64 + Sync,
{
    policy.validate()?;
    let device_map: BTreeMap<DeviceId, &Device> = devices.iter().map(|d| (d.id, d)).collect();
    let link_map: BTreeMap<DeviceId, &RadioLink> = links
        .iter()
        .filter_map(|l| match l.tx {
            NodeId::Device(id) => Some((id, l)),
            NodeId::Bs => None,
        })
        .collect();

    #[cfg(feature = "parallel")]
    let per_cluster: Vec<Result<Vec<ModeAssignment>>> = {
        use rayon::prelude::*;
        clusters
            .par_iter()
            .map(|c| classify_cluster(c, &device_map, &link_map, d2d_pathloss, policy, ctx, excluded))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_cluster: Vec<Result<Vec<ModeAssignment>>> = clusters
        .iter()
        .map(|c| classify_cluster(c, &device_map, &link_map, d2d_pathloss, policy, ctx, excluded))
        .collect();

    let mut out: BTreeMap<DeviceId, ModeAssignment> = BTreeMap::new();
    for res in per_cluster {
        for a in res? {
            if out.insert(a.device_id, a).is_some() {
                return Err(SimError::contract(
                    "tms",
                    "device present in more than one cluster",
                ));
            }
        }
    }
    for dev in devices {
        out.entry(dev.id).or_insert_with(|| {
            let life = link_map
                .get(&dev.id)
                .map(|l| projected_cellular_life(dev, l, ctx))
                .unwrap_or(ProjectedLife::InfiniteConsumption);
            ModeAssignment {
                device_id: dev.id,
                mode: TxMode::Cellular,
                paired_relay: None,
                projected_life: life,
            }
        });
    }
    Ok(out.into_values().collect())
}

/// Applies assignments back onto the device set.
pub fn apply_assignments(devices: &mut [Device], assignments: &[ModeAssignment]) {
    let by_id: BTreeMap<DeviceId, &ModeAssignment> =
        assignments.iter().map(|a| (a.device_id, a)).collect();
    for dev in devices {
        if let Some(a) = by_id.get(&dev.id) {
            dev.mode = a.mode;
            dev.paired_relay = a.paired_relay;
        }
    }
}
