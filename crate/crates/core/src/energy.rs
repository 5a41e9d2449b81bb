//! Device energy accounting.
//!
//! Converts event traces into per-device energy consumption and battery-life
//! projections. Transmission is priced from the PA model (radiated power over
//! PA efficiency plus a circuitry constant), reception and the fixed
//! procedures (paging, clock synchronization, control-plane establishment)
//! have constant powers and durations, and all remaining time runs at sleep
//! power. Devices additionally wake four times a day to listen to paging;
//! traced paging listens replace that baseline for their day.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::{Device, DeviceId, TrafficProfile};
use crate::protocol::{EpisodeKind, EventTrace, TrafficOrigin, SECONDS_PER_DAY};
use crate::Result;

/// Device power consumption parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    /// Power amplifier efficiency (fraction of radiated over drawn power).
    pub pa_efficiency: f64,
    /// Static transmit-chain circuitry draw, W.
    pub tx_circuitry_w: f64,
    /// Receive power, W.
    pub rx_w: f64,
    pub paging_w: f64,
    pub paging_s: f64,
    pub clock_w: f64,
    pub clock_s: f64,
    pub cp_w: f64,
    pub cp_s: f64,
    pub sleep_w: f64,
    /// Baseline paging listens per day.
    pub drx_per_day: u32,
    /// Battery capacity, J.
    pub capacity_j: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            pa_efficiency: 0.45,
            tx_circuitry_w: 0.060,
            rx_w: 0.100,
            paging_w: 0.100,
            paging_s: 0.010,
            clock_w: 0.100,
            clock_s: 0.010,
            cp_w: 0.200,
            cp_s: 0.010,
            sleep_w: 0.00001,
            drx_per_day: 4,
            capacity_j: 6500.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(SimError::Config("power.pa_efficiency must be in (0, 1]".into()));
        }
        for (name, v) in [
            ("tx_circuitry_w", self.tx_circuitry_w),
            ("rx_w", self.rx_w),
            ("paging_w", self.paging_w),
            ("clock_w", self.clock_w),
            ("cp_w", self.cp_w),
            ("sleep_w", self.sleep_w),
        ] {
            if !(v > 0.0) {
                return Err(SimError::Config(format!("power.{name} must be positive")));
            }
        }
        if !(self.capacity_j >= 0.0) {
            return Err(SimError::Config("power.capacity_j must be non-negative".into()));
        }
        Ok(())
    }
}

/// Total electrical draw while transmitting at the given radiated power.
pub fn tx_power_w(tx_power_dbm: f64, model: &PowerModel) -> f64 {
    let radiated_w = 10.0f64.powf((tx_power_dbm - 30.0) / 10.0);
    radiated_w / model.pa_efficiency + model.tx_circuitry_w
}

/// Breakdown keys for energy reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    Transmit,
    Receive,
    PagingListen,
    ClockSync,
    CpEstablish,
    Sleep,
}

impl EnergyKind {
    fn of(kind: &EpisodeKind) -> EnergyKind {
        match kind {
            EpisodeKind::Transmit { .. } => EnergyKind::Transmit,
            EpisodeKind::Receive => EnergyKind::Receive,
            EpisodeKind::PagingListen => EnergyKind::PagingListen,
            EpisodeKind::ClockSync => EnergyKind::ClockSync,
            EpisodeKind::CpEstablish => EnergyKind::CpEstablish,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub device_id: DeviceId,
    pub energy_per_day_j: f64,
    pub battery_life_days: f64,
    /// Joules per day per activity kind; sums to `energy_per_day_j`.
    pub breakdown: BTreeMap<EnergyKind, f64>,
}

/// Battery life in days for a report; infinite when no energy is consumed.
pub fn battery_life(report: &EnergyReport, model: &PowerModel) -> f64 {
    if model.capacity_j <= 0.0 {
        return 0.0;
    }
    if report.energy_per_day_j <= 0.0 {
        return f64::INFINITY;
    }
    model.capacity_j / report.energy_per_day_j
}

fn episode_power(kind: &EpisodeKind, model: &PowerModel) -> f64 {
    match kind {
        EpisodeKind::Transmit { tx_dbm } => tx_power_w(*tx_dbm, model),
        EpisodeKind::Receive => model.rx_w,
        EpisodeKind::PagingListen => model.paging_w,
        EpisodeKind::ClockSync => model.clock_w,
        EpisodeKind::CpEstablish => model.cp_w,
    }
}

fn price_device(
    device: DeviceId,
    episodes: &[(f64, f64, EpisodeKind)],
    horizon_s: f64,
    model: &PowerModel,
) -> Result<EnergyReport> {
    let days = horizon_s / SECONDS_PER_DAY;

    let mut by_kind: BTreeMap<EnergyKind, f64> = BTreeMap::new();
    let mut active_s = 0.0;
    let mut prev_end = f64::NEG_INFINITY;
    let mut paged_days: Vec<bool> = vec![false; days.ceil() as usize];
    for &(start, dur, ref kind) in episodes {
        if start < prev_end - 1e-9 {
            return Err(SimError::contract(
                "energy",
                format!("device {device} has overlapping episodes at t = {start}"),
            ));
        }
        prev_end = start + dur;
        *by_kind.entry(EnergyKind::of(kind)).or_insert(0.0) += dur * episode_power(kind, model);
        active_s += dur;
        if matches!(kind, EpisodeKind::PagingListen) {
            let day = ((start / SECONDS_PER_DAY) as usize).min(paged_days.len().saturating_sub(1));
            if let Some(flag) = paged_days.get_mut(day) {
                *flag = true;
            }
        }
    }

    // Baseline paging wake-ups for days without traced listens.
    let full_days = days.floor() as usize;
    let baseline_days = (0..full_days).filter(|&d| !paged_days[d]).count() as f64;
    let baseline_listens = baseline_days * model.drx_per_day as f64;
    if baseline_listens > 0.0 {
        *by_kind.entry(EnergyKind::PagingListen).or_insert(0.0) +=
            baseline_listens * model.paging_w * model.paging_s;
        active_s += baseline_listens * model.paging_s;
    }

    let sleep_s = (horizon_s - active_s).max(0.0);
    if sleep_s > 0.0 {
        *by_kind.entry(EnergyKind::Sleep).or_insert(0.0) += sleep_s * model.sleep_w;
    }

    let total_j: f64 = by_kind.values().sum();
    let energy_per_day_j = if days > 0.0 { total_j / days } else { total_j };
    let scale = if days > 0.0 { days } else { 1.0 };
    let breakdown: BTreeMap<EnergyKind, f64> =
        by_kind.into_iter().map(|(k, v)| (k, v / scale)).collect();

    let mut report = EnergyReport {
        device_id: device,
        energy_per_day_j,
        battery_life_days: 0.0,
        breakdown,
    };
    report.battery_life_days = battery_life(&report, model);
    Ok(report)
}

fn grouped_episodes(
    trace: &EventTrace,
    devices: &[Device],
) -> BTreeMap<DeviceId, Vec<(f64, f64, EpisodeKind)>> {
    let mut grouped: BTreeMap<DeviceId, Vec<(f64, f64, EpisodeKind)>> =
        devices.iter().map(|d| (d.id, Vec::new())).collect();
    for e in &trace.episodes {
        grouped
            .entry(e.node)
            .or_default()
            .push((e.start_s, e.duration_s, e.kind));
    }
    for eps in grouped.values_mut() {
        eps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    grouped
}

/// Prices a trace into one report per device, sequential implementation.
pub fn energy_of_trace_seq(
    trace: &EventTrace,
    devices: &[Device],
    model: &PowerModel,
) -> Result<BTreeMap<DeviceId, EnergyReport>> {
    let grouped = grouped_episodes(trace, devices);
    let mut out = BTreeMap::new();
    for (id, eps) in &grouped {
        out.insert(*id, price_device(*id, eps, trace.horizon_s, model)?);
    }
    Ok(out)
}

/// Prices a trace into one report per device; per-device work runs in
/// parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn energy_of_trace(
    trace: &EventTrace,
    devices: &[Device],
    model: &PowerModel,
) -> Result<BTreeMap<DeviceId, EnergyReport>> {
    use rayon::prelude::*;
    let grouped: Vec<(DeviceId, Vec<(f64, f64, EpisodeKind)>)> =
        grouped_episodes(trace, devices).into_iter().collect();
    let reports: Vec<Result<(DeviceId, EnergyReport)>> = grouped
        .par_iter()
        .map(|(id, eps)| Ok((*id, price_device(*id, eps, trace.horizon_s, model)?)))
        .collect();
    reports.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
pub fn energy_of_trace(
    trace: &EventTrace,
    devices: &[Device],
    model: &PowerModel,
) -> Result<BTreeMap<DeviceId, EnergyReport>> {
    energy_of_trace_seq(trace, devices, model)
}

/// Daily energy of a device that delivers all reports over its cellular
/// link, in closed form. This is the estimate the mode selection uses and it
/// matches what the event engine produces for a cellular device.
pub fn cellular_daily_energy_j(
    rate_bps: f64,
    traffic: &TrafficProfile,
    control_bits: u64,
    origin: TrafficOrigin,
    tx_dbm: f64,
    model: &PowerModel,
) -> f64 {
    let reports = traffic.reports_per_day as f64;
    let t_tx = traffic.packet_bits as f64 / rate_bps;
    let t_ack = control_bits as f64 / rate_bps;
    let listens = match origin {
        TrafficOrigin::MobileOriginated => model.drx_per_day as f64,
        TrafficOrigin::MobileTerminated => reports,
    };
    let active_s =
        reports * (model.clock_s + model.cp_s + t_tx + t_ack) + listens * model.paging_s;
    reports
        * (model.clock_w * model.clock_s
            + model.cp_w * model.cp_s
            + tx_power_w(tx_dbm, model) * t_tx
            + model.rx_w * t_ack)
        + listens * model.paging_w * model.paging_s
        + (SECONDS_PER_DAY - active_s).max(0.0) * model.sleep_w
}
