//! Experiment orchestration.
//!
//! `run_scenario` executes the full pipeline for one run label on a prepared
//! deployment; `compare_methods` runs several labels against the identical
//! environment, deployment and links so results differ only by the method.
//! Artifacts (summary.json, cdf_battery.csv, devices.csv, clusters.csv and
//! the optional links/trace/environment dumps) land in a per-run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channel::{self, ChannelParams, RadioLink, Shadower};
use crate::clustering::{cluster_devices, Cluster, ClusterDescriptor};
use crate::config::{RunConfig, RunLabel};
use crate::energy::{self, EnergyReport};
use crate::error::SimError;
use crate::geometry::{self, Device, DeviceId, Environment, TxMode};
use crate::metrics::{self, ModeHistogram, RunSummary, BATTERY_LIFE_REQUIREMENT_DAYS};
use crate::protocol::{
    self, CycleStats, EventTrace, FormationStatus, LinkTables, Pairing, PendingReports,
};
use crate::tms::{self, EnergyContext, ModeAssignment};
use crate::Result;

/// How many times a round re-selects relays after formation rejections
/// before unpaired remotes fall back.
const MAX_REPAIR_ROUNDS: usize = 3;

/// Deployment shared by every run of one invocation.
pub struct Prepared {
    pub env: Environment,
    pub devices: Vec<Device>,
    pub cellular_links: Vec<RadioLink>,
    pub shadower: Option<Shadower>,
    pub fingerprint: String,
}

/// Builds the environment, deploys devices and evaluates all cellular links.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let env = geometry::build_environment(
        &cfg.geometry.grid,
        cfg.geometry.cell_radius_m,
        cfg.geometry.bs_height_m,
        cfg.seed,
    )?;
    let devices = geometry::deploy_devices(
        &env,
        cfg.device_count,
        cfg.seed,
        cfg.traffic.profile(),
        cfg.power.capacity_j,
        cfg.device.max_tx_power_dbm,
    )?;
    let shadower = Shadower::new(cfg.seed, cfg.channel.shadowing);
    let cellular_links = channel::cellular_links(&env, &devices, &cfg.channel, shadower.as_ref());
    let fingerprint = metrics::config_fingerprint(cfg.canonical_json()?.as_bytes());
    Ok(Prepared {
        env,
        devices,
        cellular_links,
        shadower,
        fingerprint,
    })
}

/// Everything a finished run leaves behind in memory.
pub struct RunOutput {
    pub summary: RunSummary,
    pub assignments: Vec<ModeAssignment>,
    pub clusters: Vec<Cluster>,
    pub reports: BTreeMap<DeviceId, EnergyReport>,
    pub lives_days: Vec<f64>,
    pub stats: CycleStats,
    pub trace: EventTrace,
}

fn baseline_assignments(prepared: &Prepared, cfg: &RunConfig) -> Vec<ModeAssignment> {
    let ctx = EnergyContext {
        model: &cfg.power,
        control_bits: cfg.protocol.control_bits,
        origin: cfg.traffic.origin,
    };
    prepared
        .devices
        .iter()
        .zip(&prepared.cellular_links)
        .map(|(dev, link)| ModeAssignment {
            device_id: dev.id,
            mode: if link.rate_bps > 0.0 {
                TxMode::Cellular
            } else {
                TxMode::Unreachable
            },
            paired_relay: None,
            projected_life: tms::projected_cellular_life(dev, link, &ctx),
        })
        .collect()
}

/// Builds the pairing list (with D2D pathloss and rate) for the remotes of
/// an assignment set.
fn pairings_of(
    assignments: &[ModeAssignment],
    devices: &[Device],
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> Vec<Pairing> {
    assignments
        .iter()
        .filter_map(|a| {
            let relay = a.paired_relay?;
            if a.mode != TxMode::Remote {
                return None;
            }
            let link = channel::d2d_link(
                &devices[a.device_id as usize],
                &devices[relay as usize],
                params,
                shadow,
            );
            Some(Pairing {
                remote: a.device_id,
                relay,
                d2d_pathloss_db: link.pathloss_db,
                d2d_rate_bps: link.rate_bps,
            })
        })
        .collect()
}

fn link_tables(cellular_links: &[RadioLink], pairs: &[Pairing]) -> LinkTables {
    LinkTables {
        cell_rate: cellular_links
            .iter()
            .filter_map(|l| match l.tx {
                channel::NodeId::Device(id) => Some((id, l.rate_bps)),
                channel::NodeId::Bs => None,
            })
            .collect(),
        d2d: pairs
            .iter()
            .map(|p| ((p.remote, p.relay), (p.d2d_pathloss_db, p.d2d_rate_bps)))
            .collect(),
    }
}

/// Reconciles assignments with the formation outcomes: remotes whose pairing
/// never established fall back (cellular when reachable, unreachable
/// otherwise) and relays left without any established remote return to
/// cellular mode.
fn reconcile(
    assignments: &mut [ModeAssignment],
    established: &BTreeSet<(DeviceId, DeviceId)>,
    cellular_links: &[RadioLink],
) {
    let mut established_per_relay: BTreeMap<DeviceId, usize> = BTreeMap::new();
    for (_, relay) in established {
        *established_per_relay.entry(*relay).or_insert(0) += 1;
    }
    for a in assignments.iter_mut() {
        match a.mode {
            TxMode::Remote => {
                let ok = a
                    .paired_relay
                    .map(|r| established.contains(&(a.device_id, r)))
                    .unwrap_or(false);
                if !ok {
                    a.paired_relay = None;
                    a.mode = if cellular_links[a.device_id as usize].rate_bps > 0.0 {
                        TxMode::Cellular
                    } else {
                        TxMode::Unreachable
                    };
                }
            }
            TxMode::Relay => {
                if established_per_relay.get(&a.device_id).copied().unwrap_or(0) == 0 {
                    a.mode = TxMode::Cellular;
                }
            }
            _ => {}
        }
    }
}

/// Executes one run label against a prepared deployment.
pub fn execute(prepared: &Prepared, cfg: &RunConfig, label: RunLabel) -> Result<RunOutput> {
    let ctx = EnergyContext {
        model: &cfg.power,
        control_bits: cfg.protocol.control_bits,
        origin: cfg.traffic.origin,
    };
    let shadow = prepared.shadower.as_ref();
    let devices = &prepared.devices;

    let mut clusters = Vec::new();
    let mut k_clusters = None;
    let mut excluded: BTreeSet<(DeviceId, DeviceId)> = BTreeSet::new();

    let d2d_pl = |a: DeviceId, b: DeviceId| {
        channel::d2d_pathloss(&devices[a as usize], &devices[b as usize], &cfg.channel, shadow)
    };

    let mut assignments = match label.method() {
        None => baseline_assignments(prepared, cfg),
        Some(method) => {
            let spec = cfg.clustering_spec(method)?;
            clusters = cluster_devices(
                devices,
                &prepared.cellular_links,
                cfg.geometry.cell_radius_m,
                &spec,
            )?;
            k_clusters = Some(spec.k);
            tms::tms_round(
                &clusters,
                devices,
                &prepared.cellular_links,
                &d2d_pl,
                &cfg.tms,
                &ctx,
                &excluded,
            )?
        }
    };

    // Formation with bounded re-selection after rejections. With the
    // deterministic channel the admission estimate equals the value the mode
    // selection already checked, so the loop runs once.
    let mut formation_trace = EventTrace::default();
    let mut established: BTreeSet<(DeviceId, DeviceId)> = BTreeSet::new();
    let mut established_pairs: Vec<Pairing> = Vec::new();
    let mut pending_uplink: BTreeMap<DeviceId, PendingReports> = BTreeMap::new();
    let mut staged = devices.clone();
    if label.method().is_some() {
        for _ in 0..=MAX_REPAIR_ROUNDS {
            let pairs: Vec<Pairing> = pairings_of(&assignments, devices, &cfg.channel, shadow)
                .into_iter()
                .filter(|p| !established.contains(&(p.remote, p.relay)))
                .collect();
            if pairs.is_empty() {
                break;
            }
            tms::apply_assignments(&mut staged, &assignments);
            let tables = link_tables(&prepared.cellular_links, &pairs);
            let start_after = formation_trace.busy_until();
            let res = protocol::run_formation(
                &staged,
                &pairs,
                cfg.tms.d2d_pathloss_max_db,
                &tables,
                &cfg.protocol,
                cfg.seed,
                &start_after,
            )?;
            let mut rejected = Vec::new();
            for o in &res.outcomes {
                match o.status {
                    FormationStatus::Established => {
                        established.insert((o.remote, o.relay));
                    }
                    FormationStatus::Rejected => rejected.push((o.remote, o.relay)),
                }
            }
            established_pairs.extend(
                pairs
                    .iter()
                    .filter(|p| established.contains(&(p.remote, p.relay))),
            );
            for (relay, pending) in res.pending_uplink {
                let e = pending_uplink.entry(relay).or_default();
                e.bits += pending.bits;
                e.count += pending.count;
            }
            formation_trace.extend_from(res.trace);
            if rejected.is_empty() {
                break;
            }
            excluded.extend(rejected);
            assignments = tms::tms_round(
                &clusters,
                devices,
                &prepared.cellular_links,
                &d2d_pl,
                &cfg.tms,
                &ctx,
                &excluded,
            )?;
            // Keep already-established pairings.
            for (remote, relay) in &established {
                if let Some(a) = assignments.iter_mut().find(|a| a.device_id == *remote) {
                    a.mode = TxMode::Remote;
                    a.paired_relay = Some(*relay);
                }
                if let Some(a) = assignments.iter_mut().find(|a| a.device_id == *relay) {
                    a.mode = TxMode::Relay;
                }
            }
        }
        reconcile(&mut assignments, &established, &prepared.cellular_links);
    }

    // Report cycle on the reconciled modes.
    let mut staged = devices.clone();
    tms::apply_assignments(&mut staged, &assignments);
    let tables = link_tables(&prepared.cellular_links, &established_pairs);
    let start_after = formation_trace.busy_until();
    let (cycle_trace, stats) = protocol::run_report_cycle(
        &staged,
        &established_pairs,
        &tables,
        cfg.traffic.origin,
        cfg.simulated_days,
        &cfg.protocol,
        cfg.seed,
        &start_after,
        &pending_uplink,
    )?;

    let mut trace = formation_trace;
    trace.extend_from(cycle_trace);
    trace.horizon_s = cfg.simulated_days as f64 * protocol::SECONDS_PER_DAY;

    let reports = energy::energy_of_trace(&trace, &staged, &cfg.power)?;

    // Battery life per device; devices that cannot deliver reports carry the
    // infinite-consumption marker (zero life).
    let lives_days: Vec<f64> = assignments
        .iter()
        .map(|a| {
            if a.mode == TxMode::Unreachable {
                0.0
            } else {
                reports[&a.device_id].battery_life_days
            }
        })
        .collect();

    let availability = metrics::availability(&assignments)?;
    let cdf = metrics::battery_cdf(&lives_days, BATTERY_LIFE_REQUIREMENT_DAYS)?;
    let summary = RunSummary {
        label: label.to_string(),
        availability,
        frac_meeting_10y: cdf.frac_meeting,
        k_clusters,
        config_fingerprint: prepared.fingerprint.clone(),
        mode_histogram: ModeHistogram::of(&assignments),
        cdf_points: cdf.points.clone(),
    };

    Ok(RunOutput {
        summary,
        assignments,
        clusters,
        reports,
        lives_days,
        stats,
        trace,
    })
}

/// Runs one label end to end, writing artifacts when an output directory is
/// given.
pub fn run_scenario(cfg: &RunConfig, label: RunLabel, out_dir: Option<&Path>) -> Result<RunSummary> {
    let prepared = prepare(cfg)?;
    let output = execute(&prepared, cfg, label)?;
    if let Some(dir) = out_dir {
        write_artifacts(dir, cfg, &prepared, label, &output)?;
    }
    Ok(output.summary)
}

/// Runs every label on the identical deployment and writes a comparison
/// table next to the per-run directories.
pub fn compare_methods(
    cfg: &RunConfig,
    labels: &[RunLabel],
    out_dir: Option<&Path>,
) -> Result<Vec<RunSummary>> {
    if labels.is_empty() {
        return Err(SimError::Config("no run labels requested".into()));
    }
    let prepared = prepare(cfg)?;
    let mut summaries = Vec::with_capacity(labels.len());
    for label in labels {
        let output = execute(&prepared, cfg, *label)?;
        if let Some(dir) = out_dir {
            write_artifacts(dir, cfg, &prepared, *label, &output)?;
        }
        summaries.push(output.summary);
    }
    if let Some(dir) = out_dir {
        write_comparison(dir, &summaries)?;
    }
    Ok(summaries)
}

// ---------------------------------------------------------------------------
// Artifact writing
// ---------------------------------------------------------------------------

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_artifacts(
    root: &Path,
    cfg: &RunConfig,
    prepared: &Prepared,
    label: RunLabel,
    output: &RunOutput,
) -> Result<()> {
    let dir = root.join(label.to_string());
    fs::create_dir_all(&dir)?;

    write_json(&dir.join("summary.json"), &output.summary)?;
    fs::write(root.join("config.json"), cfg.canonical_json()? + "\n")?;

    // cdf_battery.csv
    let mut cdf = String::from("battery_life_days,cumulative_fraction\n");
    for (days, frac) in &output.summary.cdf_points {
        writeln!(cdf, "{days},{frac}").expect("string write");
    }
    fs::write(dir.join("cdf_battery.csv"), cdf)?;

    // devices.csv
    let cluster_of: BTreeMap<DeviceId, u32> = output
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (*m, c.id)))
        .collect();
    let mut devices_csv = String::from(
        "device_id,x_m,y_m,z_m,building_id,floor,cluster_id,mode,paired_relay,\
         cellular_pathloss_db,cellular_snr_db,cellular_rate_bps,projected_life_days,\
         energy_per_day_j,battery_life_days\n",
    );
    for (dev, a) in prepared.devices.iter().zip(&output.assignments) {
        let link = &prepared.cellular_links[dev.id as usize];
        let report = &output.reports[&dev.id];
        let cluster = cluster_of
            .get(&dev.id)
            .map(|c| c.to_string())
            .unwrap_or_default();
        let relay = a.paired_relay.map(|r| r.to_string()).unwrap_or_default();
        let building = dev.building_id.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            devices_csv,
            "{},{},{},{},{},{},{},{:?},{},{},{},{},{},{},{}",
            dev.id,
            dev.position.x,
            dev.position.y,
            dev.position.z,
            building,
            dev.floor,
            cluster,
            a.mode,
            relay,
            link.pathloss_db,
            link.snr_db,
            link.rate_bps,
            a.projected_life.days(),
            report.energy_per_day_j,
            report.battery_life_days,
        )
        .expect("string write");
    }
    fs::write(dir.join("devices.csv"), devices_csv)?;

    // clusters.csv
    let mut clusters_csv = String::from(
        "cluster_id,method,members,r_start_m,r_end_m,phi_start_rad,phi_end_rad,\
         centroid_x_m,centroid_y_m,centroid_device\n",
    );
    for c in &output.clusters {
        match c.descriptor {
            ClusterDescriptor::Sector {
                r_start,
                r_end,
                phi_start,
                phi_end,
            } => writeln!(
                clusters_csv,
                "{},{},{},{},{},{},{},,,",
                c.id,
                label,
                c.members.len(),
                r_start,
                r_end,
                phi_start,
                phi_end
            )
            .expect("string write"),
            ClusterDescriptor::Centroid { x, y, device } => writeln!(
                clusters_csv,
                "{},{},{},,,,,{},{},{}",
                c.id,
                label,
                c.members.len(),
                x,
                y,
                device
            )
            .expect("string write"),
        }
    }
    fs::write(dir.join("clusters.csv"), clusters_csv)?;

    if cfg.outputs.write_links {
        let mut links_csv = String::from("tx,rx,pathloss_db,snr_db,rate_bps\n");
        for l in &prepared.cellular_links {
            writeln!(links_csv, "{},{},{},{},{}", l.tx, l.rx, l.pathloss_db, l.snr_db, l.rate_bps)
                .expect("string write");
        }
        fs::write(dir.join("links.csv"), links_csv)?;
    }

    if cfg.outputs.write_trace {
        let mut trace_txt = String::new();
        let mut episodes = output.trace.episodes.clone();
        episodes.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.node.cmp(&b.node)));
        for e in &episodes {
            let msg = e.msg.map(|m| format!("{m:?}")).unwrap_or_default();
            writeln!(
                trace_txt,
                "{} {} {:?} {} {}",
                e.start_s,
                e.node,
                e.kind,
                e.duration_s,
                msg
            )
            .expect("string write");
        }
        fs::write(dir.join("trace.txt"), trace_txt)?;
    }

    if cfg.outputs.write_environment {
        write_json(&root.join("environment.json"), &prepared.env)?;
        write_json(&root.join("deployment.json"), &prepared.devices)?;
    }
    Ok(())
}

fn write_comparison(root: &Path, summaries: &[RunSummary]) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut csv = String::from("label,availability,frac_meeting_10y,k_clusters\n");
    for s in summaries {
        writeln!(
            csv,
            "{},{},{},{}",
            s.label,
            s.availability,
            s.frac_meeting_10y,
            s.k_clusters.map(|k| k.to_string()).unwrap_or_default()
        )
        .expect("string write");
    }
    fs::write(root.join("comparison.csv"), csv)?;
    Ok(())
}

/// Renders the comparison table for the terminal.
pub fn format_comparison(summaries: &[RunSummary]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<14} {:>12} {:>16} {:>10}",
        "method", "availability", "meets 10 years", "clusters"
    )
    .expect("string write");
    for s in summaries {
        writeln!(
            out,
            "{:<14} {:>12.4} {:>16.4} {:>10}",
            s.label,
            s.availability,
            s.frac_meeting_10y,
            s.k_clusters.map(|k| k.to_string()).unwrap_or_else(|| "-".into())
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.device_count = 300;
        cfg.seed = 11;
        cfg.geometry.cell_radius_m = 500.0;
        cfg.clustering.a_sector_m2 = 40_000.0;
        cfg
    }

    #[test]
    fn baseline_marks_only_zero_rate_unreachable() {
        let cfg = small_cfg();
        let prepared = prepare(&cfg).unwrap();
        let out = execute(&prepared, &cfg, RunLabel::Baseline).unwrap();
        for (a, l) in out.assignments.iter().zip(&prepared.cellular_links) {
            match a.mode {
                TxMode::Unreachable => assert_eq!(l.rate_bps, 0.0),
                TxMode::Cellular => assert!(l.rate_bps > 0.0),
                m => panic!("baseline produced mode {m:?}"),
            }
        }
    }

    #[test]
    fn execute_is_deterministic() {
        let cfg = small_cfg();
        let prepared = prepare(&cfg).unwrap();
        let a = execute(&prepared, &cfg, RunLabel::Distance).unwrap();
        let b = execute(&prepared, &cfg, RunLabel::Distance).unwrap();
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn remote_pairs_share_a_cluster() {
        let cfg = small_cfg();
        let prepared = prepare(&cfg).unwrap();
        let out = execute(&prepared, &cfg, RunLabel::Geometric).unwrap();
        let cluster_of: BTreeMap<DeviceId, u32> = out
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |m| (*m, c.id)))
            .collect();
        for a in &out.assignments {
            if let (TxMode::Remote, Some(relay)) = (a.mode, a.paired_relay) {
                assert_eq!(cluster_of.get(&a.device_id), cluster_of.get(&relay));
            }
        }
    }

    #[test]
    fn compare_reuses_identical_deployment() {
        let cfg = small_cfg();
        let labels = [RunLabel::Baseline, RunLabel::Distance];
        let summaries = compare_methods(&cfg, &labels, None).unwrap();
        assert_eq!(summaries.len(), 2);
        assert_eq!(summaries[0].config_fingerprint, summaries[1].config_fingerprint);
    }
}
