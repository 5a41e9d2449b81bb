//! Urban environment construction and device deployment.
//!
//! The environment replicates a Madrid-grid-style city block around a single
//! macro base station until the whole cell disc is covered. One grid is
//! 387 m (west-east) by 552 m (north-south) and holds 15 buildings plus one
//! park. The published model leaves the per-building footprints open, so this
//! module compiles in a fixed layout: a 4x4 arrangement of 81 m x 120 m
//! blocks separated by 21 m (west-east) and 24 m (north-south) streets, with
//! the park occupying one fixed slot. Building heights are drawn uniformly
//! from 8 to 15 floors at 3.5 m per floor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::seeds;
use crate::Result;

/// Grid outer dimensions in meters.
pub const GRID_WIDTH_M: f64 = 387.0;
pub const GRID_DEPTH_M: f64 = 552.0;

/// Block layout inside one grid: 4 columns x 4 rows of 81 m x 120 m slots.
pub const BLOCK_WIDTH_M: f64 = 81.0;
pub const BLOCK_DEPTH_M: f64 = 120.0;
pub const STREET_WIDTH_EW_M: f64 = 21.0;
pub const STREET_WIDTH_NS_M: f64 = 24.0;

/// Row-major slot index (4x4) left open as the park.
pub const PARK_SLOT: usize = 5;

pub const MIN_FLOORS: u32 = 8;
pub const MAX_FLOORS: u32 = 15;
pub const FLOOR_HEIGHT_M: f64 = 3.5;

pub const DEVICE_ANTENNA_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance in the horizontal plane, ignoring z.
    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Axis-aligned rectangle in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn depth(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Distance from an interior point to the nearest edge; 0 on the boundary.
    pub fn depth_from_edge(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.min_x).min(self.max_x - x);
        let dy = (y - self.min_y).min(self.max_y - y);
        dx.min(dy).max(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Building {
    pub id: u32,
    pub footprint: Rect,
    pub floors: u32,
    pub floor_height_m: f64,
}

impl Building {
    pub fn height_m(&self) -> f64 {
        self.floors as f64 * self.floor_height_m
    }
}

/// Madrid-grid layout parameters. The defaults reproduce the compiled-in
/// block table; they are exposed so tests can build tiny synthetic worlds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub grid_width_m: f64,
    pub grid_depth_m: f64,
    pub min_floors: u32,
    pub max_floors: u32,
    pub floor_height_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            grid_width_m: GRID_WIDTH_M,
            grid_depth_m: GRID_DEPTH_M,
            min_floors: MIN_FLOORS,
            max_floors: MAX_FLOORS,
            floor_height_m: FLOOR_HEIGHT_M,
        }
    }
}

/// The world: replicated grids around a single macro site at the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub buildings: Vec<Building>,
    pub bs_position: Point3,
    pub cell_radius_m: f64,
    /// Grid replica count per axis (west-east, north-south).
    pub grid_replicas: (u32, u32),
}

impl Environment {
    pub fn building(&self, id: u32) -> &Building {
        &self.buildings[id as usize]
    }

    /// Bounding rectangle of the full tiling.
    pub fn tiling_bounds(&self) -> Rect {
        let half_w = self.grid_replicas.0 as f64 * GRID_WIDTH_M / 2.0;
        let half_d = self.grid_replicas.1 as f64 * GRID_DEPTH_M / 2.0;
        Rect::new(-half_w, -half_d, half_w, half_d)
    }
}

/// Per-device traffic profile: periodic fixed-size uplink reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub reports_per_day: u32,
    pub packet_bits: u64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            reports_per_day: 24,
            packet_bits: 2000,
        }
    }
}

/// Transmission mode assigned to a device for the current update interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxMode {
    /// Uploads its own reports directly to the base station.
    Cellular,
    /// Forwards reports of paired remote devices besides its own.
    Relay,
    /// Delivers reports over a D2D link to a paired relay.
    Remote,
    /// Cannot reach the base station and has no admissible relay.
    Unreachable,
}

pub type DeviceId = u32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub position: Point3,
    pub building_id: Option<u32>,
    /// Floor index within the building, 0 = ground floor.
    pub floor: u32,
    /// Remaining battery charge in Joules.
    pub battery_j: f64,
    pub max_tx_power_dbm: f64,
    pub traffic: TrafficProfile,
    pub mode: TxMode,
    pub paired_relay: Option<DeviceId>,
}

impl Device {
    pub fn horizontal_distance_to(&self, p: &Point3) -> f64 {
        self.position.horizontal_distance(p)
    }
}

/// Slot origins of the 16 blocks inside one grid, row-major.
fn block_slots() -> [(f64, f64); 16] {
    let mut slots = [(0.0, 0.0); 16];
    for row in 0..4 {
        for col in 0..4 {
            let x0 = col as f64 * (BLOCK_WIDTH_M + STREET_WIDTH_EW_M);
            let y0 = row as f64 * (BLOCK_DEPTH_M + STREET_WIDTH_NS_M);
            slots[row * 4 + col] = (x0, y0);
        }
    }
    slots
}

/// Builds the replicated-grid environment covering the cell disc.
///
/// The tiling is symmetric around the base station at the origin: the replica
/// counts are the smallest that cover `[-r, r]` on each axis. Identical
/// `(spec, cell_radius, seed)` inputs produce identical environments.
pub fn build_environment(
    spec: &GridSpec,
    cell_radius_m: f64,
    bs_height_m: f64,
    seed: u64,
) -> Result<Environment> {
    if !(cell_radius_m > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "cell radius must be positive, got {cell_radius_m}"
        )));
    }
    let nx = (2.0 * cell_radius_m / spec.grid_width_m).ceil() as u32;
    let ny = (2.0 * cell_radius_m / spec.grid_depth_m).ceil() as u32;

    let mut rng = seeds::stream_rng(seed, seeds::STREAM_ENVIRONMENT);
    let slots = block_slots();
    let mut buildings = Vec::with_capacity((nx * ny * 15) as usize);

    let origin_x = -(nx as f64) * spec.grid_width_m / 2.0;
    let origin_y = -(ny as f64) * spec.grid_depth_m / 2.0;

    for gj in 0..ny {
        for gi in 0..nx {
            let gx = origin_x + gi as f64 * spec.grid_width_m;
            let gy = origin_y + gj as f64 * spec.grid_depth_m;
            for (slot, &(sx, sy)) in slots.iter().enumerate() {
                if slot == PARK_SLOT {
                    continue;
                }
                let floors = rng.random_range(spec.min_floors..=spec.max_floors);
                let min_x = gx + sx;
                let min_y = gy + sy;
                buildings.push(Building {
                    id: buildings.len() as u32,
                    footprint: Rect::new(
                        min_x,
                        min_y,
                        min_x + BLOCK_WIDTH_M,
                        min_y + BLOCK_DEPTH_M,
                    ),
                    floors,
                    floor_height_m: spec.floor_height_m,
                });
            }
        }
    }

    Ok(Environment {
        buildings,
        bs_position: Point3::new(0.0, 0.0, bs_height_m),
        cell_radius_m,
        grid_replicas: (nx, ny),
    })
}

/// Deploys `n` static indoor devices uniformly over the in-cell building
/// area: building uniform, horizontal position uniform over the footprint,
/// floor uniform over the building's floors, antenna 1.5 m above the floor.
/// Positions falling outside the cell disc are redrawn.
pub fn deploy_devices(
    env: &Environment,
    n: usize,
    seed: u64,
    traffic: TrafficProfile,
    battery_j: f64,
    max_tx_power_dbm: f64,
) -> Result<Vec<Device>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if env.buildings.is_empty() {
        return Err(SimError::InvalidInput(
            "cannot deploy devices: environment has no buildings".into(),
        ));
    }

    let mut rng = seeds::stream_rng(seed, seeds::STREAM_DEPLOY);
    let mut devices = Vec::with_capacity(n);
    for id in 0..n {
        let mut attempts = 0;
        let (building, x, y) = loop {
            let b = &env.buildings[rng.random_range(0..env.buildings.len())];
            let x = rng.random_range(b.footprint.min_x..b.footprint.max_x);
            let y = rng.random_range(b.footprint.min_y..b.footprint.max_y);
            let dx = x - env.bs_position.x;
            let dy = y - env.bs_position.y;
            if (dx * dx + dy * dy).sqrt() <= env.cell_radius_m {
                break (b, x, y);
            }
            attempts += 1;
            if attempts > 100_000 {
                return Err(SimError::contract(
                    "geometry",
                    "no building area inside the cell disc",
                ));
            }
        };
        let floor = rng.random_range(0..building.floors);
        let z = DEVICE_ANTENNA_HEIGHT_M + floor as f64 * building.floor_height_m;
        devices.push(Device {
            id: id as DeviceId,
            position: Point3::new(x, y, z),
            building_id: Some(building.id),
            floor,
            battery_j,
            max_tx_power_dbm,
            traffic,
            mode: TxMode::Cellular,
            paired_relay: None,
        });
    }
    Ok(devices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_env(seed: u64) -> Environment {
        build_environment(&GridSpec::default(), 866.0, 25.0, seed).unwrap()
    }

    #[test]
    fn rejects_non_positive_cell_radius() {
        assert!(build_environment(&GridSpec::default(), 0.0, 25.0, 1).is_err());
        assert!(build_environment(&GridSpec::default(), -5.0, 25.0, 1).is_err());
    }

    #[test]
    fn default_cell_uses_5_by_4_replicas_of_15_buildings() {
        let env = default_env(1);
        assert_eq!(env.grid_replicas, (5, 4));
        assert_eq!(env.buildings.len(), 5 * 4 * 15);
    }

    #[test]
    fn floors_within_bounds_and_height_fixed() {
        let env = default_env(3);
        for b in &env.buildings {
            assert!((MIN_FLOORS..=MAX_FLOORS).contains(&b.floors));
            assert_eq!(b.floor_height_m, FLOOR_HEIGHT_M);
            assert!(b.footprint.width() > 0.0 && b.footprint.depth() > 0.0);
        }
        // Both floor extremes must actually occur over 300 buildings.
        assert!(env.buildings.iter().any(|b| b.floors == MIN_FLOORS));
        assert!(env.buildings.iter().any(|b| b.floors == MAX_FLOORS));
    }

    #[test]
    fn environment_is_deterministic_under_seed() {
        let a = default_env(42);
        let b = default_env(42);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = default_env(43);
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn tiling_covers_the_cell_disc() {
        let env = default_env(7);
        let bounds = env.tiling_bounds();
        let mut rng = seeds::stream_rng(99, 0xdead);
        for _ in 0..10_000 {
            let r = env.cell_radius_m * rng.random_range(0.0f64..1.0).sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let (x, y) = (r * phi.cos(), r * phi.sin());
            assert!(bounds.contains(x, y), "({x}, {y}) outside tiling");
        }
    }

    #[test]
    fn deployment_is_inside_buildings_and_deterministic() {
        let env = default_env(1);
        let devices =
            deploy_devices(&env, 500, 7, TrafficProfile::default(), 6500.0, 23.0).unwrap();
        assert_eq!(devices.len(), 500);
        for d in &devices {
            let b = env.building(d.building_id.unwrap());
            assert!(b.footprint.contains(d.position.x, d.position.y));
            assert!(d.floor < b.floors);
            let expect_z = DEVICE_ANTENNA_HEIGHT_M + d.floor as f64 * b.floor_height_m;
            assert_eq!(d.position.z, expect_z);
            assert!(d.horizontal_distance_to(&env.bs_position) <= env.cell_radius_m);
        }
        let again = deploy_devices(&env, 500, 7, TrafficProfile::default(), 6500.0, 23.0).unwrap();
        assert_eq!(
            serde_json::to_string(&devices).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn zero_devices_is_empty() {
        let env = default_env(1);
        let devices = deploy_devices(&env, 0, 7, TrafficProfile::default(), 6500.0, 23.0).unwrap();
        assert!(devices.is_empty());
    }

    #[test]
    fn deploy_without_buildings_fails() {
        let env = Environment {
            buildings: vec![],
            bs_position: Point3::new(0.0, 0.0, 25.0),
            cell_radius_m: 100.0,
            grid_replicas: (0, 0),
        };
        assert!(deploy_devices(&env, 1, 7, TrafficProfile::default(), 6500.0, 23.0).is_err());
    }
}
