//! Run configuration.
//!
//! One JSON document with nested sections per module. Unknown keys are
//! rejected; omitted sections take their documented defaults, so a config
//! file only needs the values it changes.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::clustering::{geometric_cluster_count, ClusteringSpec, Method};
use crate::energy::PowerModel;
use crate::error::SimError;
use crate::geometry::{GridSpec, TrafficProfile};
use crate::protocol::{ProtocolConfig, TrafficOrigin};
use crate::tms::TmsPolicy;
use crate::Result;

/// One run of the pipeline: either the D2D-disabled baseline or a
/// clustering method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunLabel {
    Baseline,
    Geometric,
    #[serde(rename = "kmeans")]
    KMeans,
    Distance,
    DistanceCsi,
}

impl RunLabel {
    pub fn method(&self) -> Option<Method> {
        match self {
            RunLabel::Baseline => None,
            RunLabel::Geometric => Some(Method::Geometric),
            RunLabel::KMeans => Some(Method::KMeans),
            RunLabel::Distance => Some(Method::Distance),
            RunLabel::DistanceCsi => Some(Method::DistanceCsi),
        }
    }

    pub fn all_methods() -> [RunLabel; 4] {
        [
            RunLabel::Geometric,
            RunLabel::KMeans,
            RunLabel::Distance,
            RunLabel::DistanceCsi,
        ]
    }
}

impl std::fmt::Display for RunLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunLabel::Baseline => "baseline",
            RunLabel::Geometric => "geometric",
            RunLabel::KMeans => "kmeans",
            RunLabel::Distance => "distance",
            RunLabel::DistanceCsi => "distance-csi",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub cell_radius_m: f64,
    pub bs_height_m: f64,
    pub grid: GridSpec,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            cell_radius_m: 866.0,
            bs_height_m: 25.0,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    /// Target geometric cluster area, m^2.
    pub a_sector_m2: f64,
    /// Inner no-D2D circle radius, m.
    pub inner_radius_m: f64,
    /// Cellular SNR bound for DistanceCsi centroid candidates, dB.
    pub csi_snr_threshold_db: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            a_sector_m2: 40_000.0,
            inner_radius_m: 100.0,
            csi_snr_threshold_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub reports_per_day: u32,
    pub packet_bits: u64,
    pub origin: TrafficOrigin,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            reports_per_day: 24,
            packet_bits: 2000,
            origin: TrafficOrigin::MobileOriginated,
        }
    }
}

impl TrafficConfig {
    pub fn profile(&self) -> TrafficProfile {
        TrafficProfile {
            reports_per_day: self.reports_per_day,
            packet_bits: self.packet_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub max_tx_power_dbm: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            max_tx_power_dbm: 23.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Dump every evaluated link to links.csv.
    pub write_links: bool,
    /// Dump the event trace for conformance inspection.
    pub write_trace: bool,
    /// Dump environment and deployment as JSON for byte-identical replay.
    pub write_environment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub device_count: usize,
    pub simulated_days: u32,
    /// Runs to perform; results are compared on identical deployments.
    pub methods: Vec<RunLabel>,
    pub geometry: GeometryConfig,
    pub channel: ChannelParams,
    pub clustering: ClusteringConfig,
    pub tms: TmsPolicy,
    pub traffic: TrafficConfig,
    pub protocol: ProtocolConfig,
    pub power: PowerModel,
    pub device: DeviceConfig,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            device_count: 20_000,
            simulated_days: 1,
            methods: vec![
                RunLabel::Baseline,
                RunLabel::Geometric,
                RunLabel::KMeans,
                RunLabel::Distance,
                RunLabel::DistanceCsi,
            ],
            geometry: GeometryConfig::default(),
            channel: ChannelParams::default(),
            clustering: ClusteringConfig::default(),
            tms: TmsPolicy::default(),
            traffic: TrafficConfig::default(),
            protocol: ProtocolConfig::default(),
            power: PowerModel::default(),
            device: DeviceConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Validates every section against its module's preconditions.
    pub fn validate(&self) -> Result<()> {
        if self.device_count == 0 {
            return Err(SimError::Config("device_count must be at least 1".into()));
        }
        if self.simulated_days == 0 {
            return Err(SimError::Config("simulated_days must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(SimError::Config("methods must name at least one run".into()));
        }
        if !(self.geometry.cell_radius_m > 0.0) {
            return Err(SimError::Config("geometry.cell_radius_m must be positive".into()));
        }
        if !(self.geometry.bs_height_m > 0.0) {
            return Err(SimError::Config("geometry.bs_height_m must be positive".into()));
        }
        if self.geometry.grid.min_floors < 1 || self.geometry.grid.max_floors < self.geometry.grid.min_floors
        {
            return Err(SimError::Config("geometry.grid floor bounds are inconsistent".into()));
        }
        if self.traffic.reports_per_day == 0 || self.traffic.packet_bits == 0 {
            return Err(SimError::Config("traffic must have positive reports and packet size".into()));
        }
        self.channel.validate()?;
        self.tms.validate()?;
        self.protocol.validate()?;
        self.power.validate()?;
        // Clustering bounds depend on the cell geometry.
        self.clustering_spec(Method::Geometric)?
            .validate(self.geometry.cell_radius_m)?;
        Ok(())
    }

    /// The cluster count every method uses: the geometric construction's
    /// count for the configured sector area.
    pub fn cluster_count(&self) -> Result<usize> {
        geometric_cluster_count(
            self.geometry.cell_radius_m,
            self.clustering.inner_radius_m,
            self.clustering.a_sector_m2,
        )
    }

    pub fn clustering_spec(&self, method: Method) -> Result<ClusteringSpec> {
        Ok(ClusteringSpec {
            method,
            a_sector_m2: self.clustering.a_sector_m2,
            k: self.cluster_count()?,
            inner_radius_m: self.clustering.inner_radius_m,
            csi_snr_threshold_db: self.clustering.csi_snr_threshold_db,
            seed: self.seed,
        })
    }

    /// Canonical JSON encoding; its hash is the config fingerprint.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_json().unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json("{\"sneaky\": 1}");
        assert!(matches!(err, Err(SimError::Config(_))));
        let err = RunConfig::from_json("{\"channel\": {\"bandwidht_hz\": 1000}}");
        assert!(matches!(err, Err(SimError::Config(_))));
    }

    #[test]
    fn partial_configs_take_defaults() {
        let cfg = RunConfig::from_json("{\"seed\": 7, \"device_count\": 100}").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.device_count, 100);
        assert_eq!(cfg.clustering.a_sector_m2, 40_000.0);
    }

    #[test]
    fn invalid_sections_are_rejected() {
        let bad = "{\"device_count\": 0}";
        assert!(RunConfig::from_json(bad).is_err());
        let bad = "{\"tms\": {\"update_interval_s\": 0}}";
        assert!(RunConfig::from_json(bad).is_err());
        let bad = "{\"clustering\": {\"a_sector_m2\": -5.0}}";
        assert!(RunConfig::from_json(bad).is_err());
    }
}
