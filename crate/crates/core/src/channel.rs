//! Radio link evaluation: pathloss, SNR and achievable rate.
//!
//! Cellular links (device to base station) use a 900 MHz log-distance macro
//! loss plus building penetration: a fixed external-wall term and a
//! per-interior-wall term driven by how deep inside its building footprint
//! the device sits. D2D links branch on the relative placement of the two
//! ends (same floor / different floor in one building, or different
//! buildings). All losses are deterministic; lognormal shadowing can be
//! enabled and is then a pure function of (seed, endpoints).
//!
//! Below the -7 dB SNR cutoff a link carries no data at all.

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::error::SimError;
use crate::geometry::{Device, DeviceId, Environment};
use crate::seeds;
use crate::Result;

/// Thermal noise density in dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// SNR below which no data transmission is possible.
pub const SNR_CUTOFF_DB: f64 = -7.0;

/// Radio endpoint: the base station or a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Bs,
    Device(DeviceId),
}

impl NodeId {
    /// Stable integer key used for per-link RNG derivation.
    pub fn key(&self) -> u64 {
        match self {
            NodeId::Bs => u64::MAX,
            NodeId::Device(id) => *id as u64,
        }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Bs => write!(f, "bs"),
            NodeId::Device(id) => write!(f, "{id}"),
        }
    }
}

/// Evaluated link between two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioLink {
    pub tx: NodeId,
    pub rx: NodeId,
    pub pathloss_db: f64,
    pub snr_db: f64,
    /// Achievable rate; 0 when `snr_db` is below the cutoff.
    pub rate_bps: f64,
}

impl RadioLink {
    pub fn is_usable(&self) -> bool {
        self.rate_bps > 0.0
    }
}

/// Relative placement of the two ends of a D2D link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum D2dScenario {
    SameFloorSameBuilding,
    DifferentFloorSameBuilding,
    DifferentBuildings,
}

/// SNR to rate mapping.
///
/// The default approximates an LTE link abstraction with attenuated Shannon
/// capacity: `rate = eff * BW * log2(1 + snr)` floored at the cutoff and
/// capped at a maximum spectral efficiency. A staircase table of
/// `(snr_db, bits/s/Hz)` steps can be supplied instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateMapping {
    AttenuatedShannon {
        efficiency: f64,
        min_snr_db: f64,
        max_spectral_eff: f64,
    },
    /// Steps sorted by SNR threshold; the highest step at or below the SNR
    /// applies. SNR below the first step yields rate 0.
    Table { steps: Vec<RateStep> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    pub snr_db: f64,
    pub spectral_eff: f64,
}

impl Default for RateMapping {
    fn default() -> Self {
        RateMapping::AttenuatedShannon {
            efficiency: 0.75,
            min_snr_db: SNR_CUTOFF_DB,
            max_spectral_eff: 4.8,
        }
    }
}

/// Lognormal shadowing configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowingConfig {
    pub enabled: bool,
    pub sigma_db: f64,
}

impl Default for ShadowingConfig {
    fn default() -> Self {
        ShadowingConfig {
            enabled: false,
            sigma_db: 6.0,
        }
    }
}

/// Channel parameter block. All values are config-exposed; the defaults are
/// the calibrated ones used by the shipped scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Outdoor macro log-distance exponent (loss slope is 10*alpha per decade).
    pub outdoor_exponent: f64,
    /// Outdoor macro loss intercept at 1 m, dB.
    pub outdoor_intercept_db: f64,
    /// External wall penetration, dB. Applied once on cellular links and
    /// twice on cross-building D2D links.
    pub external_wall_db: f64,
    /// Loss per interior wall, dB.
    pub interior_wall_db: f64,
    /// One interior wall per this many meters of depth from the facade.
    pub interior_wall_spacing_m: f64,
    /// D2D same-floor-same-building log-distance parameters.
    pub d2d_same_floor_exponent: f64,
    pub d2d_same_floor_intercept_db: f64,
    /// Additional loss per floor of separation within one building, dB.
    pub d2d_floor_db: f64,
    /// D2D different-buildings log-distance parameters (outdoor segment).
    pub d2d_cross_exponent: f64,
    pub d2d_cross_intercept_db: f64,
    pub shadowing: ShadowingConfig,
    /// Uplink allocation bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Receiver noise figure at the base station, dB.
    pub bs_noise_figure_db: f64,
    /// Receiver noise figure at a device, dB.
    pub ue_noise_figure_db: f64,
    /// Constant boresight gain credited on cellular links, dB.
    pub bs_antenna_gain_db: f64,
    pub rate: RateMapping,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            outdoor_exponent: 3.908,
            outdoor_intercept_db: 12.6,
            external_wall_db: 20.0,
            interior_wall_db: 5.0,
            interior_wall_spacing_m: 5.0,
            d2d_same_floor_exponent: 3.0,
            d2d_same_floor_intercept_db: 38.0,
            d2d_floor_db: 12.0,
            d2d_cross_exponent: 4.0,
            d2d_cross_intercept_db: 12.6,
            shadowing: ShadowingConfig::default(),
            bandwidth_hz: 90_000.0,
            bs_noise_figure_db: 3.0,
            ue_noise_figure_db: 5.0,
            bs_antenna_gain_db: 7.0,
            rate: RateMapping::default(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(SimError::Config("channel.bandwidth_hz must be positive".into()));
        }
        if !(self.interior_wall_spacing_m > 0.0) {
            return Err(SimError::Config(
                "channel.interior_wall_spacing_m must be positive".into(),
            ));
        }
        if self.external_wall_db < 0.0 || self.interior_wall_db < 0.0 || self.d2d_floor_db < 0.0 {
            return Err(SimError::Config("penetration losses must be non-negative".into()));
        }
        if let RateMapping::Table { steps } = &self.rate {
            if steps.is_empty() {
                return Err(SimError::Config("rate table must not be empty".into()));
            }
            for w in steps.windows(2) {
                if w[1].snr_db <= w[0].snr_db || w[1].spectral_eff < w[0].spectral_eff {
                    return Err(SimError::Config(
                        "rate table steps must be strictly increasing in SNR and non-decreasing in efficiency".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Free-space loss at 900 MHz, the hard lower bound for every model branch.
pub fn free_space_loss_db(distance_m: f64) -> f64 {
    let d = distance_m.max(1.0);
    20.0 * d.log10() + 20.0 * 900.0e6f64.log10() - 147.55
}

/// Deterministic per-link shadowing sampler.
#[derive(Debug, Clone, Copy)]
pub struct Shadower {
    seed: u64,
    sigma_db: f64,
}

impl Shadower {
    pub fn new(seed: u64, cfg: ShadowingConfig) -> Option<Self> {
        cfg.enabled.then_some(Shadower {
            seed,
            sigma_db: cfg.sigma_db,
        })
    }

    /// Shadowing in dB for the (unordered) endpoint pair; pure in
    /// (seed, a, b).
    pub fn sample_db(&self, a: NodeId, b: NodeId) -> f64 {
        let mut rng = seeds::link_rng(self.seed, seeds::STREAM_SHADOWING, a.key(), b.key());
        // Box-Muller from two uniform draws.
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let std_normal = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        std_normal * self.sigma_db
    }
}

/// Number of interior walls between the facade and the device.
pub fn interior_walls(env: &Environment, dev: &Device, params: &ChannelParams) -> u32 {
    match dev.building_id {
        Some(b) => {
            let fp = env.building(b).footprint;
            let depth = fp.depth_from_edge(dev.position.x, dev.position.y);
            (depth / params.interior_wall_spacing_m).floor() as u32
        }
        None => 0,
    }
}

/// Pathloss of the cellular link between a device and the base station.
pub fn cellular_pathloss(
    env: &Environment,
    dev: &Device,
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> f64 {
    let d3d = dev.position.distance(&env.bs_position).max(1.0);
    let outdoor = params.outdoor_intercept_db + 10.0 * params.outdoor_exponent * d3d.log10();
    let penetration = params.external_wall_db
        + interior_walls(env, dev, params) as f64 * params.interior_wall_db;
    let shadow_db = shadow
        .map(|s| s.sample_db(NodeId::Bs, NodeId::Device(dev.id)))
        .unwrap_or(0.0);
    (outdoor + penetration + shadow_db).max(free_space_loss_db(d3d))
}

/// Classifies the relative placement of two indoor devices.
pub fn classify_d2d(a: &Device, b: &Device) -> D2dScenario {
    match (a.building_id, b.building_id) {
        (Some(ba), Some(bb)) if ba == bb => {
            if a.floor == b.floor {
                D2dScenario::SameFloorSameBuilding
            } else {
                D2dScenario::DifferentFloorSameBuilding
            }
        }
        _ => D2dScenario::DifferentBuildings,
    }
}

/// Pathloss between two devices; symmetric in its arguments.
pub fn d2d_pathloss(
    a: &Device,
    b: &Device,
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> f64 {
    let d3d = a.position.distance(&b.position).max(1.0);
    let base = match classify_d2d(a, b) {
        D2dScenario::SameFloorSameBuilding => {
            params.d2d_same_floor_intercept_db
                + 10.0 * params.d2d_same_floor_exponent * d3d.log10()
        }
        D2dScenario::DifferentFloorSameBuilding => {
            let floors = a.floor.abs_diff(b.floor) as f64;
            params.d2d_same_floor_intercept_db
                + 10.0 * params.d2d_same_floor_exponent * d3d.log10()
                + floors * params.d2d_floor_db
        }
        D2dScenario::DifferentBuildings => {
            params.d2d_cross_intercept_db
                + 10.0 * params.d2d_cross_exponent * d3d.log10()
                + 2.0 * params.external_wall_db
        }
    };
    let shadow_db = shadow
        .map(|s| s.sample_db(NodeId::Device(a.id), NodeId::Device(b.id)))
        .unwrap_or(0.0);
    (base + shadow_db).max(free_space_loss_db(d3d))
}

/// Receiver noise floor in dBm.
pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Link budget: SNR at the receiver in dB.
pub fn link_snr(
    pathloss_db: f64,
    tx_power_dbm: f64,
    bandwidth_hz: f64,
    noise_figure_db: f64,
) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "bandwidth must be positive, got {bandwidth_hz}"
        )));
    }
    Ok(tx_power_dbm - pathloss_db - noise_floor_dbm(bandwidth_hz, noise_figure_db))
}

/// Achievable rate for an SNR over the given bandwidth; 0 below the cutoff.
pub fn snr_to_rate(snr_db: f64, bandwidth_hz: f64, mapping: &RateMapping) -> f64 {
    match mapping {
        RateMapping::AttenuatedShannon {
            efficiency,
            min_snr_db,
            max_spectral_eff,
        } => {
            if snr_db < *min_snr_db {
                return 0.0;
            }
            let snr_lin = 10.0f64.powf(snr_db / 10.0);
            let se = (efficiency * (1.0 + snr_lin).log2()).min(*max_spectral_eff);
            se * bandwidth_hz
        }
        RateMapping::Table { steps } => {
            let mut se = 0.0;
            for step in steps {
                if snr_db >= step.snr_db {
                    se = step.spectral_eff;
                } else {
                    break;
                }
            }
            se * bandwidth_hz
        }
    }
}

/// Evaluates the uplink cellular link of one device.
pub fn cellular_link(
    env: &Environment,
    dev: &Device,
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> RadioLink {
    let pl = cellular_pathloss(env, dev, params, shadow);
    // Antenna gain enters the budget as a pathloss offset.
    let snr = link_snr(
        pl - params.bs_antenna_gain_db,
        dev.max_tx_power_dbm,
        params.bandwidth_hz,
        params.bs_noise_figure_db,
    )
    .expect("bandwidth validated");
    RadioLink {
        tx: NodeId::Device(dev.id),
        rx: NodeId::Bs,
        pathloss_db: pl,
        snr_db: snr,
        rate_bps: snr_to_rate(snr, params.bandwidth_hz, &params.rate),
    }
}

/// Evaluates the D2D link between two devices.
pub fn d2d_link(
    a: &Device,
    b: &Device,
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> RadioLink {
    let pl = d2d_pathloss(a, b, params, shadow);
    let snr = link_snr(
        pl,
        a.max_tx_power_dbm,
        params.bandwidth_hz,
        params.ue_noise_figure_db,
    )
    .expect("bandwidth validated");
    RadioLink {
        tx: NodeId::Device(a.id),
        rx: NodeId::Device(b.id),
        pathloss_db: pl,
        snr_db: snr,
        rate_bps: snr_to_rate(snr, params.bandwidth_hz, &params.rate),
    }
}

/// Cellular links for every device, sequential implementation.
pub fn cellular_links_seq(
    env: &Environment,
    devices: &[Device],
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> Vec<RadioLink> {
    devices
        .iter()
        .map(|d| cellular_link(env, d, params, shadow))
        .collect()
}

/// Cellular links for every device; data-parallel when the `parallel`
/// feature is enabled.
#[cfg(feature = "parallel")]
pub fn cellular_links(
    env: &Environment,
    devices: &[Device],
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> Vec<RadioLink> {
    use rayon::prelude::*;
    devices
        .par_iter()
        .map(|d| cellular_link(env, d, params, shadow))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn cellular_links(
    env: &Environment,
    devices: &[Device],
    params: &ChannelParams,
    shadow: Option<&Shadower>,
) -> Vec<RadioLink> {
    cellular_links_seq(env, devices, params, shadow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, TrafficProfile, TxMode};

    pub(crate) fn test_device(id: DeviceId, x: f64, y: f64, building: Option<u32>, floor: u32) -> Device {
        Device {
            id,
            position: Point3::new(x, y, 1.5 + floor as f64 * 3.5),
            building_id: building,
            floor,
            battery_j: 6500.0,
            max_tx_power_dbm: 23.0,
            traffic: TrafficProfile::default(),
            mode: TxMode::Cellular,
            paired_relay: None,
        }
    }

    fn env_with_one_building() -> Environment {
        Environment {
            buildings: vec![crate::geometry::Building {
                id: 0,
                footprint: crate::geometry::Rect::new(20.0, -40.0, 101.0, 80.0),
                floors: 10,
                floor_height_m: 3.5,
            }],
            bs_position: Point3::new(0.0, 0.0, 25.0),
            cell_radius_m: 866.0,
            grid_replicas: (1, 1),
        }
    }

    #[test]
    fn budget_matches_hand_computation() {
        // 23 dBm tx over 180 kHz with NF 5 dB: noise floor is
        // -174 + 10*log10(180e3) + 5 = -116.447 dBm.
        let snr = link_snr(120.0, 23.0, 180_000.0, 5.0).unwrap();
        assert!((snr - 19.4473).abs() < 1e-3, "snr = {snr}");
        let snr = link_snr(140.0, 23.0, 180_000.0, 5.0).unwrap();
        assert!((snr - (-0.5527)).abs() < 1e-3, "snr = {snr}");
    }

    #[test]
    fn budget_is_affine_in_loss_and_power() {
        let base = link_snr(120.0, 23.0, 180_000.0, 5.0).unwrap();
        assert!((link_snr(123.0, 23.0, 180_000.0, 5.0).unwrap() - (base - 3.0)).abs() < 1e-12);
        assert!((link_snr(120.0, 26.0, 180_000.0, 5.0).unwrap() - (base + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn budget_rejects_non_positive_bandwidth() {
        assert!(link_snr(120.0, 23.0, 0.0, 5.0).is_err());
        assert!(link_snr(120.0, 23.0, -1.0, 5.0).is_err());
    }

    #[test]
    fn snr_balance_point_is_zero() {
        // loss equal to tx minus noise floor means exactly 0 dB.
        let nf = noise_floor_dbm(180_000.0, 5.0);
        let snr = link_snr(23.0 - nf, 23.0, 180_000.0, 5.0).unwrap();
        assert!(snr.abs() < 1e-12);
    }

    #[test]
    fn rate_is_zero_below_cutoff_and_monotone() {
        let p = ChannelParams::default();
        assert_eq!(snr_to_rate(-7.01, p.bandwidth_hz, &p.rate), 0.0);
        assert_eq!(snr_to_rate(-100.0, p.bandwidth_hz, &p.rate), 0.0);
        assert!(snr_to_rate(-7.0, p.bandwidth_hz, &p.rate) > 0.0);
        let mut prev = 0.0;
        let mut s = -20.0;
        while s < 40.0 {
            let r = snr_to_rate(s, p.bandwidth_hz, &p.rate);
            assert!(r >= prev, "rate not monotone at {s}");
            prev = r;
            s += 0.1;
        }
    }

    #[test]
    fn rate_table_is_a_staircase() {
        let table = RateMapping::Table {
            steps: vec![
                RateStep { snr_db: -7.0, spectral_eff: 0.2 },
                RateStep { snr_db: 0.0, spectral_eff: 1.0 },
                RateStep { snr_db: 10.0, spectral_eff: 3.0 },
            ],
        };
        assert_eq!(snr_to_rate(-7.5, 1000.0, &table), 0.0);
        assert_eq!(snr_to_rate(-7.0, 1000.0, &table), 200.0);
        assert_eq!(snr_to_rate(5.0, 1000.0, &table), 1000.0);
        assert_eq!(snr_to_rate(50.0, 1000.0, &table), 3000.0);
    }

    #[test]
    fn deep_indoor_adds_at_least_external_wall() {
        let env = env_with_one_building();
        let p = ChannelParams::default();
        let dev = test_device(0, 50.0, 0.0, Some(0), 0);
        let loss = cellular_pathloss(&env, &dev, &p, None);
        let d3d = dev.position.distance(&env.bs_position);
        let outdoor_only = p.outdoor_intercept_db + 10.0 * p.outdoor_exponent * d3d.log10();
        assert!(loss >= outdoor_only + 20.0);
    }

    #[test]
    fn log_distance_identity_without_penetration() {
        let env = env_with_one_building();
        let mut p = ChannelParams::default();
        p.external_wall_db = 0.0;
        p.interior_wall_db = 0.0;
        // Same ray from the BS at d and 2d, ground floor height.
        let near = test_device(0, 100.0, 0.0, None, 0);
        let far = test_device(1, 200.0, 0.0, None, 0);
        let l1 = cellular_pathloss(&env, &near, &p, None);
        let l2 = cellular_pathloss(&env, &far, &p, None);
        // Heights shift the 3-D distances slightly off exactly 2x; compare
        // against the model evaluated at the true distances instead.
        let d1 = near.position.distance(&env.bs_position);
        let d2 = far.position.distance(&env.bs_position);
        let expect = 10.0 * p.outdoor_exponent * (d2 / d1).log10();
        assert!(((l2 - l1) - expect).abs() < 1e-9);
    }

    #[test]
    fn pathloss_never_below_free_space() {
        let env = env_with_one_building();
        let p = ChannelParams::default();
        for (i, x) in [30.0, 60.0, 90.0, 100.5].iter().enumerate() {
            let dev = test_device(i as DeviceId, *x, 10.0, Some(0), i as u32 % 10);
            let loss = cellular_pathloss(&env, &dev, &p, None);
            let d = dev.position.distance(&env.bs_position);
            assert!(loss >= free_space_loss_db(d));
        }
    }

    #[test]
    fn d2d_classification_is_total() {
        let a = test_device(0, 0.0, 0.0, Some(4), 3);
        let b = test_device(1, 5.0, 0.0, Some(4), 3);
        let c = test_device(2, 5.0, 0.0, Some(4), 5);
        let d = test_device(3, 5.0, 0.0, Some(9), 2);
        assert_eq!(classify_d2d(&a, &b), D2dScenario::SameFloorSameBuilding);
        assert_eq!(classify_d2d(&a, &c), D2dScenario::DifferentFloorSameBuilding);
        assert_eq!(classify_d2d(&a, &d), D2dScenario::DifferentBuildings);
    }

    #[test]
    fn d2d_pathloss_is_symmetric() {
        let p = ChannelParams::default();
        let mut rng = crate::seeds::stream_rng(5, 0xabc);
        for i in 0..1000u32 {
            let a = test_device(
                2 * i,
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
                Some(rng.random_range(0..6)),
                rng.random_range(0..12),
            );
            let b = test_device(
                2 * i + 1,
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
                Some(rng.random_range(0..6)),
                rng.random_range(0..12),
            );
            assert_eq!(d2d_pathloss(&a, &b, &p, None), d2d_pathloss(&b, &a, &p, None));
        }
    }

    #[test]
    fn floor_separation_costs_at_least_same_floor() {
        let p = ChannelParams::default();
        let mut rng = crate::seeds::stream_rng(6, 0xdef);
        for i in 0..100u32 {
            let x = rng.random_range(1.0..60.0);
            let y = rng.random_range(-30.0..30.0);
            let k = rng.random_range(1..8u32);
            let a = test_device(2 * i, 0.0, 0.0, Some(0), 0);
            let same = test_device(2 * i + 1, x, y, Some(0), 0);
            let stacked = test_device(2 * i + 1, x, y, Some(0), k);
            // Compare the two closed-form branches at the same horizontal
            // geometry: the k-floor pair must lose at least as much.
            let l_same = d2d_pathloss(&a, &same, &p, None);
            let l_stack = d2d_pathloss(&a, &stacked, &p, None);
            assert!(l_stack >= l_same, "k={k} x={x} y={y}");
        }
    }

    #[test]
    fn mirrored_geometry_has_equal_loss() {
        let p = ChannelParams::default();
        let a = test_device(0, 10.0, 4.0, Some(0), 2);
        let b = test_device(1, 14.0, 1.0, Some(0), 2);
        let am = test_device(2, -10.0, -4.0, Some(0), 2);
        let bm = test_device(3, -14.0, -1.0, Some(0), 2);
        assert_eq!(d2d_pathloss(&a, &b, &p, None), d2d_pathloss(&am, &bm, &p, None));
    }

    #[test]
    fn shadowing_is_reproducible_per_link() {
        let cfg = ShadowingConfig { enabled: true, sigma_db: 6.0 };
        let s = Shadower::new(11, cfg).unwrap();
        let x = s.sample_db(NodeId::Device(3), NodeId::Device(8));
        let y = s.sample_db(NodeId::Device(8), NodeId::Device(3));
        assert_eq!(x, y);
        let z = s.sample_db(NodeId::Device(3), NodeId::Device(9));
        assert_ne!(x, z);
        // Disabled config yields no shadower.
        assert!(Shadower::new(11, ShadowingConfig::default()).is_none());
    }

    #[test]
    fn parallel_and_sequential_links_agree() {
        let env = env_with_one_building();
        let p = ChannelParams::default();
        let devices: Vec<Device> = (0..64)
            .map(|i| test_device(i, 25.0 + (i as f64), 0.5 * i as f64 - 10.0, Some(0), i % 10))
            .collect();
        let a = cellular_links(&env, &devices, &p, None);
        let b = cellular_links_seq(&env, &devices, &p, None);
        assert_eq!(a, b);
    }
}
