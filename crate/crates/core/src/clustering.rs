//! Device clustering.
//!
//! Devices inside the inner circle (radius `inner_radius_m` around the base
//! station) enjoy low propagation loss and are never clustered; everything
//! outside is partitioned by one of four methods:
//!
//! * `Geometric` - the annulus is cut into concentric rings of radial width
//!   `sqrt(a_sector)`, each ring into enough equal angular sectors that every
//!   cell's area is about `a_sector`.
//! * `KMeans` - a single-pass sequential variant: greedy farthest-point
//!   selection of K centroid devices, then each remaining device (ascending
//!   id) joins the nearest centroid and the receiving cluster re-centers on
//!   the member closest to its mean coordinate.
//! * `Distance` - K centroid devices drawn uniformly; centroids never move.
//! * `DistanceCsi` - like `Distance` but centroids are drawn only from
//!   devices whose cellular SNR exceeds a threshold.
//!
//! The geometric construction fixes the cluster count K; the other three
//! take the same K so results stay comparable. All distances are horizontal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{NodeId, RadioLink};
use crate::error::SimError;
use crate::geometry::{Device, DeviceId};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Geometric,
    KMeans,
    Distance,
    DistanceCsi,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Geometric => "geometric",
            Method::KMeans => "kmeans",
            Method::Distance => "distance",
            Method::DistanceCsi => "distance-csi",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSpec {
    pub method: Method,
    /// Target area of one geometric cluster, m^2.
    pub a_sector_m2: f64,
    /// Cluster count; for non-geometric methods this is the geometric
    /// construction's count for the same `a_sector_m2`.
    pub k: usize,
    /// Inner no-D2D circle radius, m.
    pub inner_radius_m: f64,
    /// Minimum cellular SNR for centroid candidates (DistanceCsi only), dB.
    pub csi_snr_threshold_db: f64,
    pub seed: u64,
}

impl ClusteringSpec {
    pub fn validate(&self, cell_radius_m: f64) -> Result<()> {
        if !(self.a_sector_m2 > 0.0) {
            return Err(SimError::Config("clustering: a_sector must be positive".into()));
        }
        if !(self.inner_radius_m >= 0.0 && self.inner_radius_m < cell_radius_m) {
            return Err(SimError::Config(
                "clustering: inner radius must satisfy 0 <= r_in < cell_radius".into(),
            ));
        }
        if self.k == 0 {
            return Err(SimError::Config("clustering: k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClusterDescriptor {
    /// Centroid is an actual device at (x, y).
    Centroid { x: f64, y: f64, device: DeviceId },
    /// Annular sector in polar coordinates about the base station; a point
    /// belongs iff r_start < r <= r_end and phi_start < phi <= phi_end.
    Sector {
        r_start: f64,
        r_end: f64,
        phi_start: f64,
        phi_end: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub members: Vec<DeviceId>,
    pub descriptor: ClusterDescriptor,
}

impl Cluster {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Ring layout of the geometric construction.
#[derive(Debug, Clone)]
pub struct RingLayout {
    /// Per ring: (r_start, r_end, sector_count, first_cluster_id).
    pub rings: Vec<(f64, f64, usize, usize)>,
    pub total: usize,
}

/// Computes the ring/sector layout for a cell. Rings have radial width
/// `sqrt(a_sector)` starting at the inner radius, the outermost ring is
/// truncated at the cell radius, and each ring is split into
/// `ceil(ring_area / a_sector)` sectors.
pub fn ring_layout(cell_radius_m: f64, inner_radius_m: f64, a_sector_m2: f64) -> Result<RingLayout> {
    let annulus = std::f64::consts::PI * (cell_radius_m.powi(2) - inner_radius_m.powi(2));
    if a_sector_m2 > annulus {
        return Err(SimError::InvalidInput(format!(
            "a_sector ({a_sector_m2} m^2) exceeds the annulus area ({annulus:.0} m^2)"
        )));
    }
    let dr = a_sector_m2.sqrt();
    let n_rings = ((cell_radius_m - inner_radius_m) / dr).ceil() as usize;
    let mut rings = Vec::with_capacity(n_rings);
    let mut total = 0usize;
    for k in 0..n_rings {
        let r0 = inner_radius_m + k as f64 * dr;
        let r1 = (r0 + dr).min(cell_radius_m);
        let area = std::f64::consts::PI * (r1.powi(2) - r0.powi(2));
        let sectors = (area / a_sector_m2).ceil().max(1.0) as usize;
        rings.push((r0, r1, sectors, total));
        total += sectors;
    }
    Ok(RingLayout { rings, total })
}

/// Cluster count produced by the geometric construction; the other methods
/// take this K for the same `a_sector`.
pub fn geometric_cluster_count(
    cell_radius_m: f64,
    inner_radius_m: f64,
    a_sector_m2: f64,
) -> Result<usize> {
    Ok(ring_layout(cell_radius_m, inner_radius_m, a_sector_m2)?.total)
}

/// Polar angle normalized to (0, 2*pi].
fn polar_angle(x: f64, y: f64) -> f64 {
    let phi = y.atan2(x);
    if phi <= 0.0 {
        phi + std::f64::consts::TAU
    } else {
        phi
    }
}

impl RingLayout {
    /// Cluster id containing polar point (r, phi'); `None` inside the inner
    /// circle or outside the cell.
    pub fn locate(&self, r: f64, phi: f64, inner_radius_m: f64) -> Option<usize> {
        if r <= inner_radius_m || self.rings.is_empty() {
            return None;
        }
        let (_, last_r1, _, _) = self.rings[self.rings.len() - 1];
        if r > last_r1 {
            return None;
        }
        let dr = self.rings[0].1 - self.rings[0].0;
        let ring_idx = (((r - inner_radius_m) / dr).ceil() as usize)
            .saturating_sub(1)
            .min(self.rings.len() - 1);
        let (_, _, sectors, first_id) = self.rings[ring_idx];
        let span = std::f64::consts::TAU / sectors as f64;
        let sector_idx = ((phi / span).ceil() as usize).saturating_sub(1).min(sectors - 1);
        Some(first_id + sector_idx)
    }
}

fn eligible_sorted(devices: &[Device], inner_radius_m: f64) -> Vec<&Device> {
    let mut v: Vec<&Device> = devices
        .iter()
        .filter(|d| (d.position.x.powi(2) + d.position.y.powi(2)).sqrt() > inner_radius_m)
        .collect();
    v.sort_by_key(|d| d.id);
    v
}

fn horizontal_dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Partitions the annulus into area-equal sectors and maps each eligible
/// device into the unique sector containing its polar coordinates. Empty
/// sectors are retained so the construction's K is visible to callers.
pub fn geometric_clustering(
    devices: &[Device],
    cell_radius_m: f64,
    spec: &ClusteringSpec,
) -> Result<Vec<Cluster>> {
    let layout = ring_layout(cell_radius_m, spec.inner_radius_m, spec.a_sector_m2)?;
    let mut clusters: Vec<Cluster> = Vec::with_capacity(layout.total);
    for &(r0, r1, sectors, first_id) in &layout.rings {
        let span = std::f64::consts::TAU / sectors as f64;
        for s in 0..sectors {
            clusters.push(Cluster {
                id: (first_id + s) as u32,
                members: Vec::new(),
                descriptor: ClusterDescriptor::Sector {
                    r_start: r0,
                    r_end: r1,
                    phi_start: s as f64 * span,
                    phi_end: (s + 1) as f64 * span,
                },
            });
        }
    }
    for dev in eligible_sorted(devices, spec.inner_radius_m) {
        let r = (dev.position.x.powi(2) + dev.position.y.powi(2)).sqrt();
        let phi = polar_angle(dev.position.x, dev.position.y);
        if let Some(idx) = layout.locate(r, phi, spec.inner_radius_m) {
            clusters[idx].members.push(dev.id);
        }
    }
    Ok(clusters)
}

/// Greedy farthest-point pick of `k` centroid devices: start from the device
/// farthest from the base station, then repeatedly add the device maximizing
/// its minimum distance to the chosen set. Ties break toward lower id.
fn farthest_point_init(eligible: &[&Device], k: usize) -> Vec<usize> {
    let pos: Vec<(f64, f64)> = eligible.iter().map(|d| (d.position.x, d.position.y)).collect();
    let mut chosen = Vec::with_capacity(k);
    let first = (0..eligible.len())
        .max_by(|&a, &b| {
            let ra = horizontal_dist2(pos[a], (0.0, 0.0));
            let rb = horizontal_dist2(pos[b], (0.0, 0.0));
            ra.partial_cmp(&rb).unwrap().then(eligible[b].id.cmp(&eligible[a].id))
        })
        .expect("non-empty eligible set");
    chosen.push(first);

    let mut min_d2: Vec<f64> = pos.iter().map(|&p| horizontal_dist2(p, pos[first])).collect();
    while chosen.len() < k {
        let mut best = usize::MAX;
        let mut best_d2 = -1.0;
        for i in 0..eligible.len() {
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..eligible.len() {
            let d2 = horizontal_dist2(pos[i], pos[best]);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    chosen
}

/// Single-pass sequential K-means variant; centroids are always devices.
pub fn kmeans_clustering(devices: &[Device], spec: &ClusteringSpec) -> Result<Vec<Cluster>> {
    let eligible = eligible_sorted(devices, spec.inner_radius_m);
    if spec.k > eligible.len() {
        return Err(SimError::InvalidInput(format!(
            "k = {} exceeds the {} eligible devices",
            spec.k,
            eligible.len()
        )));
    }
    let pos: Vec<(f64, f64)> = eligible.iter().map(|d| (d.position.x, d.position.y)).collect();
    let init = farthest_point_init(&eligible, spec.k);

    // Per-cluster state: member indices, coordinate sums, current centroid.
    let mut members: Vec<Vec<usize>> = init.iter().map(|&i| vec![i]).collect();
    let mut sums: Vec<(f64, f64)> = init.iter().map(|&i| pos[i]).collect();
    let mut centroid: Vec<usize> = init.clone();

    let mut is_centroid = vec![false; eligible.len()];
    for &i in &init {
        is_centroid[i] = true;
    }

    for i in 0..eligible.len() {
        if is_centroid[i] {
            continue;
        }
        // Nearest current centroid, ties toward the lower cluster id.
        let mut best_c = 0;
        let mut best_d2 = f64::INFINITY;
        for (c, &ci) in centroid.iter().enumerate() {
            let d2 = horizontal_dist2(pos[i], pos[ci]);
            if d2 < best_d2 {
                best_d2 = d2;
                best_c = c;
            }
        }
        members[best_c].push(i);
        sums[best_c].0 += pos[i].0;
        sums[best_c].1 += pos[i].1;
        // Re-center the receiving cluster on the member nearest its mean.
        let n = members[best_c].len() as f64;
        let mean = (sums[best_c].0 / n, sums[best_c].1 / n);
        let mut new_centroid = members[best_c][0];
        let mut nc_d2 = f64::INFINITY;
        for &m in &members[best_c] {
            let d2 = horizontal_dist2(pos[m], mean);
            if d2 < nc_d2 || (d2 == nc_d2 && eligible[m].id < eligible[new_centroid].id) {
                nc_d2 = d2;
                new_centroid = m;
            }
        }
        centroid[best_c] = new_centroid;
    }

    Ok(members
        .into_iter()
        .zip(centroid)
        .enumerate()
        .map(|(c, (mut m, ci))| {
            m.sort_unstable();
            Cluster {
                id: c as u32,
                members: m.into_iter().map(|i| eligible[i].id).collect(),
                descriptor: ClusterDescriptor::Centroid {
                    x: pos[ci].0,
                    y: pos[ci].1,
                    device: eligible[ci].id,
                },
            }
        })
        .collect())
}

fn assign_to_fixed_centroids(eligible: &[&Device], centroid_idx: &[usize]) -> Vec<Cluster> {
    let pos: Vec<(f64, f64)> = eligible.iter().map(|d| (d.position.x, d.position.y)).collect();
    let centroids: Vec<(f64, f64)> = centroid_idx.iter().map(|&i| pos[i]).collect();

    let nearest = |i: usize| -> usize {
        let mut best_c = 0;
        let mut best_d2 = f64::INFINITY;
        for (c, &cp) in centroids.iter().enumerate() {
            let d2 = horizontal_dist2(pos[i], cp);
            if d2 < best_d2 {
                best_d2 = d2;
                best_c = c;
            }
        }
        best_c
    };

    #[cfg(feature = "parallel")]
    let assignment: Vec<usize> = {
        use rayon::prelude::*;
        (0..eligible.len()).into_par_iter().map(nearest).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let assignment: Vec<usize> = (0..eligible.len()).map(nearest).collect();

    let mut clusters: Vec<Cluster> = centroid_idx
        .iter()
        .enumerate()
        .map(|(c, &i)| Cluster {
            id: c as u32,
            members: Vec::new(),
            descriptor: ClusterDescriptor::Centroid {
                x: pos[i].0,
                y: pos[i].1,
                device: eligible[i].id,
            },
        })
        .collect();
    for (i, &c) in assignment.iter().enumerate() {
        clusters[c].members.push(eligible[i].id);
    }
    clusters
}

/// K uniformly drawn centroid devices; every other device joins the nearest
/// centroid and centroids never move.
pub fn distance_clustering(devices: &[Device], spec: &ClusteringSpec) -> Result<Vec<Cluster>> {
    let eligible = eligible_sorted(devices, spec.inner_radius_m);
    if spec.k > eligible.len() {
        return Err(SimError::InvalidInput(format!(
            "k = {} exceeds the {} eligible devices",
            spec.k,
            eligible.len()
        )));
    }
    let mut rng = crate::seeds::stream_rng(spec.seed, crate::seeds::STREAM_CLUSTERING);
    let mut idx = rand::seq::index::sample(&mut rng, eligible.len(), spec.k).into_vec();
    idx.sort_unstable();
    Ok(assign_to_fixed_centroids(&eligible, &idx))
}

/// Distance clustering with centroid candidates restricted to devices whose
/// cellular SNR exceeds the spec threshold.
pub fn distance_csi_clustering(
    devices: &[Device],
    cellular_links: &[RadioLink],
    spec: &ClusteringSpec,
) -> Result<Vec<Cluster>> {
    let snr: BTreeMap<DeviceId, f64> = cellular_links
        .iter()
        .filter_map(|l| match l.tx {
            NodeId::Device(id) => Some((id, l.snr_db)),
            NodeId::Bs => None,
        })
        .collect();
    let eligible = eligible_sorted(devices, spec.inner_radius_m);
    let candidates: Vec<usize> = eligible
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let s = snr.get(&d.id).copied().unwrap_or(f64::NEG_INFINITY);
            (s > spec.csi_snr_threshold_db).then_some(i)
        })
        .collect();
    if candidates.len() < spec.k {
        return Err(SimError::InvalidInput(format!(
            "only {} devices exceed the centroid SNR threshold {} dB, need k = {}",
            candidates.len(),
            spec.csi_snr_threshold_db,
            spec.k
        )));
    }
    let mut rng = crate::seeds::stream_rng(spec.seed, crate::seeds::STREAM_CLUSTERING);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), spec.k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    idx.sort_unstable();
    Ok(assign_to_fixed_centroids(&eligible, &idx))
}

/// Runs the method selected by the spec.
pub fn cluster_devices(
    devices: &[Device],
    cellular_links: &[RadioLink],
    cell_radius_m: f64,
    spec: &ClusteringSpec,
) -> Result<Vec<Cluster>> {
    spec.validate(cell_radius_m)?;
    match spec.method {
        Method::Geometric => geometric_clustering(devices, cell_radius_m, spec),
        Method::KMeans => kmeans_clustering(devices, spec),
        Method::Distance => distance_clustering(devices, spec),
        Method::DistanceCsi => distance_csi_clustering(devices, cellular_links, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, TrafficProfile, TxMode};

    fn dev(id: DeviceId, x: f64, y: f64) -> Device {
        Device {
            id,
            position: Point3::new(x, y, 1.5),
            building_id: Some(0),
            floor: 0,
            battery_j: 6500.0,
            max_tx_power_dbm: 23.0,
            traffic: TrafficProfile::default(),
            mode: TxMode::Cellular,
            paired_relay: None,
        }
    }

    fn spec(method: Method, k: usize) -> ClusteringSpec {
        ClusteringSpec {
            method,
            a_sector_m2: 40_000.0,
            k,
            inner_radius_m: 100.0,
            csi_snr_threshold_db: 3.0,
            seed: 9,
        }
    }

    #[test]
    fn annulus_sector_budget_matches_hand_computation() {
        // Hand oracle: floor(annulus area / a_sector) before ring rounding.
        let annulus = std::f64::consts::PI * (866.0f64.powi(2) - 100.0f64.powi(2));
        assert_eq!((annulus / 40_000.0).floor() as usize, 58);
        // The ring construction rounds each ring up; the layout fixes K.
        let k = geometric_cluster_count(866.0, 100.0, 40_000.0).unwrap();
        assert_eq!(k, 60);
    }

    #[test]
    fn rejects_a_sector_larger_than_annulus() {
        let annulus = std::f64::consts::PI * (866.0f64.powi(2) - 100.0f64.powi(2));
        assert!(ring_layout(866.0, 100.0, annulus * 1.01).is_err());
        assert!(ring_layout(866.0, 100.0, annulus * 0.99).is_ok());
    }

    #[test]
    fn inner_circle_devices_join_no_cluster() {
        let devices = vec![dev(0, 50.0, 0.0), dev(1, 0.0, 99.0), dev(2, 300.0, 0.0)];
        let clusters =
            geometric_clustering(&devices, 866.0, &spec(Method::Geometric, 60)).unwrap();
        let all: Vec<DeviceId> = clusters.iter().flat_map(|c| c.members.clone()).collect();
        assert_eq!(all, vec![2]);
    }

    #[test]
    fn identical_positions_share_a_sector() {
        let devices = vec![dev(0, 312.0, -41.0), dev(1, 312.0, -41.0)];
        let clusters =
            geometric_clustering(&devices, 866.0, &spec(Method::Geometric, 60)).unwrap();
        let home: Vec<u32> = clusters
            .iter()
            .filter(|c| !c.members.is_empty())
            .map(|c| c.id)
            .collect();
        assert_eq!(home.len(), 1);
        let c = clusters.iter().find(|c| c.id == home[0]).unwrap();
        assert_eq!(c.members, vec![0, 1]);
    }

    #[test]
    fn geometric_members_satisfy_sector_bounds() {
        let mut devices = Vec::new();
        let mut rng = crate::seeds::stream_rng(4, 0x77);
        use rand::Rng;
        for i in 0..500 {
            let r = rng.random_range(0.0..866.0f64);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            devices.push(dev(i, r * phi.cos(), r * phi.sin()));
        }
        let sp = spec(Method::Geometric, 60);
        let clusters = geometric_clustering(&devices, 866.0, &sp).unwrap();
        for c in &clusters {
            let ClusterDescriptor::Sector { r_start, r_end, phi_start, phi_end } = c.descriptor
            else {
                panic!("geometric clusters carry sector descriptors");
            };
            for &m in &c.members {
                let d = &devices[m as usize];
                let r = (d.position.x.powi(2) + d.position.y.powi(2)).sqrt();
                let phi = super::polar_angle(d.position.x, d.position.y);
                assert!(r_start < r && r <= r_end, "radial bound violated");
                assert!(phi_start < phi && phi <= phi_end, "angular bound violated");
            }
        }
    }

    #[test]
    fn kmeans_saturation_one_cluster_per_device() {
        let devices = vec![dev(0, 200.0, 0.0), dev(1, 0.0, 300.0), dev(2, -250.0, 10.0)];
        let clusters = kmeans_clustering(&devices, &spec(Method::KMeans, 3)).unwrap();
        assert_eq!(clusters.len(), 3);
        for c in &clusters {
            assert_eq!(c.members.len(), 1);
        }
    }

    #[test]
    fn kmeans_init_picks_a_max_distance_pair() {
        // Slightly asymmetric square so the brute-force optimum is unique.
        let devices = vec![
            dev(0, 200.0, 200.0),
            dev(1, 500.0, 210.0),
            dev(2, 205.0, 500.0),
            dev(3, 510.0, 520.0),
        ];
        let clusters = kmeans_clustering(&devices, &spec(Method::KMeans, 2)).unwrap();
        let mut centroids: Vec<DeviceId> = clusters
            .iter()
            .map(|c| match c.descriptor {
                ClusterDescriptor::Centroid { device, .. } => device,
                _ => unreachable!(),
            })
            .collect();
        centroids.sort_unstable();
        // Brute force over all pairs for the max pairwise distance.
        let mut best = (0, 0, -1.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d2 = horizontal_dist2(
                    (devices[i].position.x, devices[i].position.y),
                    (devices[j].position.x, devices[j].position.y),
                );
                if d2 > best.2 {
                    best = (i, j, d2);
                }
            }
        }
        assert_eq!(centroids, vec![best.0 as DeviceId, best.1 as DeviceId]);
    }

    #[test]
    fn kmeans_centroid_is_always_a_member() {
        let mut rng = crate::seeds::stream_rng(12, 0x99);
        use rand::Rng;
        let devices: Vec<Device> = (0..200)
            .map(|i| {
                let r = rng.random_range(150.0..800.0f64);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                dev(i, r * phi.cos(), r * phi.sin())
            })
            .collect();
        let clusters = kmeans_clustering(&devices, &spec(Method::KMeans, 12)).unwrap();
        for c in &clusters {
            let ClusterDescriptor::Centroid { device, .. } = c.descriptor else {
                panic!()
            };
            assert!(c.members.contains(&device));
        }
    }

    #[test]
    fn distance_assignment_matches_exhaustive_search() {
        let mut rng = crate::seeds::stream_rng(3, 0x55);
        use rand::Rng;
        let devices: Vec<Device> = (0..150)
            .map(|i| {
                let r = rng.random_range(101.0..800.0f64);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                dev(i, r * phi.cos(), r * phi.sin())
            })
            .collect();
        let sp = spec(Method::Distance, 8);
        let clusters = distance_clustering(&devices, &sp).unwrap();
        let centroids: Vec<(u32, f64, f64)> = clusters
            .iter()
            .map(|c| match c.descriptor {
                ClusterDescriptor::Centroid { x, y, .. } => (c.id, x, y),
                _ => unreachable!(),
            })
            .collect();
        for c in &clusters {
            for &m in &c.members {
                let d = &devices[m as usize];
                let mine = centroids.iter().find(|&&(id, _, _)| id == c.id).unwrap();
                let my_d2 = horizontal_dist2((d.position.x, d.position.y), (mine.1, mine.2));
                for &(other, cx, cy) in &centroids {
                    let od2 = horizontal_dist2((d.position.x, d.position.y), (cx, cy));
                    assert!(
                        my_d2 <= od2 || other == c.id,
                        "device {m} strictly closer to foreign centroid {other}"
                    );
                }
            }
        }
    }

    #[test]
    fn distance_k1_collects_everything_eligible() {
        let devices = vec![dev(0, 150.0, 0.0), dev(1, 0.0, 400.0), dev(2, 20.0, 0.0)];
        let clusters = distance_clustering(&devices, &spec(Method::Distance, 1)).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, vec![0, 1]);
    }

    #[test]
    fn distance_is_input_order_invariant() {
        let mut devices = vec![dev(0, 150.0, 0.0), dev(1, 0.0, 400.0), dev(2, -300.0, 10.0)];
        let a = distance_clustering(&devices, &spec(Method::Distance, 2)).unwrap();
        devices.reverse();
        let b = distance_clustering(&devices, &spec(Method::Distance, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csi_centroids_respect_the_threshold() {
        use crate::channel::{NodeId, RadioLink};
        let devices: Vec<Device> = (0..20).map(|i| dev(i, 150.0 + 10.0 * i as f64, 40.0)).collect();
        // SNR grows with id; only ids >= 10 exceed 3 dB.
        let links: Vec<RadioLink> = devices
            .iter()
            .map(|d| RadioLink {
                tx: NodeId::Device(d.id),
                rx: NodeId::Bs,
                pathloss_db: 100.0,
                snr_db: d.id as f64 - 6.9,
                rate_bps: 1000.0,
            })
            .collect();
        let sp = spec(Method::DistanceCsi, 4);
        let clusters = distance_csi_clustering(&devices, &links, &sp).unwrap();
        for c in &clusters {
            let ClusterDescriptor::Centroid { device, .. } = c.descriptor else {
                panic!()
            };
            assert!(device >= 10, "centroid {device} below the SNR threshold");
        }
        // Threshold above everything is infeasible.
        let mut too_high = sp.clone();
        too_high.csi_snr_threshold_db = 1e9;
        assert!(distance_csi_clustering(&devices, &links, &too_high).is_err());
    }

    #[test]
    fn csi_with_degenerate_threshold_equals_distance() {
        use crate::channel::{NodeId, RadioLink};
        let mut rng = crate::seeds::stream_rng(8, 0x31);
        use rand::Rng;
        let devices: Vec<Device> = (0..80)
            .map(|i| {
                let r = rng.random_range(120.0..800.0f64);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                dev(i, r * phi.cos(), r * phi.sin())
            })
            .collect();
        let links: Vec<RadioLink> = devices
            .iter()
            .map(|d| RadioLink {
                tx: NodeId::Device(d.id),
                rx: NodeId::Bs,
                pathloss_db: 100.0,
                snr_db: 5.0,
                rate_bps: 1000.0,
            })
            .collect();
        let mut sp = spec(Method::DistanceCsi, 6);
        sp.csi_snr_threshold_db = f64::NEG_INFINITY;
        let csi = distance_csi_clustering(&devices, &links, &sp).unwrap();
        sp.method = Method::Distance;
        let dist = distance_clustering(&devices, &sp).unwrap();
        assert_eq!(csi, dist);
    }

    #[test]
    fn k_larger_than_eligible_set_is_rejected() {
        let devices = vec![dev(0, 150.0, 0.0), dev(1, 0.0, 400.0)];
        assert!(kmeans_clustering(&devices, &spec(Method::KMeans, 3)).is_err());
        assert!(distance_clustering(&devices, &spec(Method::Distance, 3)).is_err());
    }
}
