//! Scenario configuration document.
//!
//! One TOML file describes the simulated world, the estimator settings and
//! optionally a sweep. Unknown keys are rejected. Per-vehicle lists are cycled
//! when shorter than the fleet.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::MethodMode;
use crate::factor_graph::{GateConfig, SolverConfig, DEFAULT_WINDOW_LEN};
use crate::geodesy::GeodeticPoint;
use crate::plane::PlaneConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n_vehicles: usize,
    /// Number of epochs.
    pub duration: usize,
    /// s
    #[serde(default = "default_epoch_interval")]
    pub epoch_interval: f64,
    /// Fraction of inter-vehicle ranges removed.
    #[serde(default)]
    pub interruption_rate: f64,
    /// Method used by `run` when the command line names none.
    #[serde(default)]
    pub mode: Option<MethodMode>,
    #[serde(default)]
    pub origin: OriginConfig,
    #[serde(default)]
    pub road: RoadConfig,
    #[serde(default)]
    pub vehicles: VehicleConfig,
    #[serde(default)]
    pub constellation: ConstellationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_epoch_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OriginConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// m above the ellipsoid
    pub height: f64,
}

impl Default for OriginConfig {
    fn default() -> Self {
        Self {
            latitude_deg: 39.95,
            longitude_deg: 116.32,
            height: 45.0,
        }
    }
}

impl OriginConfig {
    pub fn geodetic(&self) -> GeodeticPoint {
        GeodeticPoint::from_degrees(self.latitude_deg, self.longitude_deg, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadKind {
    Plane,
    Slope,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoadShape {
    Plane,
    /// Constant grade, rise over run.
    Slope { grade: f64 },
    /// Crest vertical curve with the given radius of curvature (m).
    Curved { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadConfig {
    pub kind: RoadKind,
    /// Rise over run; used by `slope`.
    pub grade: f64,
    /// Vertical curvature radius (m); used by `curved`.
    pub radius: f64,
    /// Direction of travel, degrees clockwise from north.
    pub heading_deg: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            kind: RoadKind::Plane,
            grade: 0.0,
            radius: 500.0,
            heading_deg: 30.0,
        }
    }
}

impl RoadConfig {
    pub fn shape(&self) -> RoadShape {
        match self.kind {
            RoadKind::Plane => RoadShape::Plane,
            RoadKind::Slope => RoadShape::Slope { grade: self.grade },
            RoadKind::Curved => RoadShape::Curved { radius: self.radius },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    /// Lateral offsets from the road axis, positive to the right (m).
    pub lane_offsets: Vec<f64>,
    /// Along-track gap between consecutive vehicles at the start (m).
    pub spacing: f64,
    /// m/s
    pub speeds: Vec<f64>,
    /// m
    pub antenna_heights: Vec<f64>,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            lane_offsets: vec![0.0, 3.5],
            spacing: 15.0,
            speeds: vec![10.0],
            antenna_heights: vec![1.5, 1.8],
        }
    }
}

impl VehicleConfig {
    pub fn lane_offset(&self, vehicle: usize) -> f64 {
        cycle(&self.lane_offsets, vehicle)
    }

    pub fn speed(&self, vehicle: usize) -> f64 {
        cycle(&self.speeds, vehicle)
    }

    pub fn antenna_height(&self, vehicle: usize) -> f64 {
        cycle(&self.antenna_heights, vehicle)
    }
}

fn cycle(values: &[f64], i: usize) -> f64 {
    values[i % values.len()]
}

/// Window of epochs during which a street canyon blocks low satellites
/// away from the street axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanyonEvent {
    pub start_epoch: u64,
    /// Exclusive.
    pub end_epoch: u64,
    /// Satellites below this elevation are blocked unless they lie along the street.
    pub mask_deg: f64,
    /// Half width of the open azimuth sector around the street axis, both directions.
    #[serde(default = "default_open_half_width")]
    pub open_half_width_deg: f64,
    /// Affected vehicles; empty means all.
    #[serde(default)]
    pub vehicles: Vec<usize>,
}

fn default_open_half_width() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationConfig {
    pub planes: usize,
    pub per_plane: usize,
    /// m
    pub orbit_radius: f64,
    pub inclination_deg: f64,
    pub elevation_mask_deg: f64,
    /// Time of epoch 0 on the constellation clock (s).
    pub start_time: f64,
    pub canyons: Vec<CanyonEvent>,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self {
            planes: 6,
            per_plane: 4,
            orbit_radius: 26_560_000.0,
            inclination_deg: 55.0,
            elevation_mask_deg: 10.0,
            start_time: 0.0,
            canyons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Zenith pseudorange noise (m); grows with 1/sin(elevation).
    pub pseudorange_sigma_base: f64,
    /// Residual error after differential correction (m).
    pub differential_sigma: f64,
    /// Line-of-sight velocity noise of a Doppler measurement (m/s).
    pub doppler_sigma: f64,
    /// m
    pub uwb_sigma: f64,
    /// Probability per epoch that a multipath burst starts on an idle
    /// (vehicle, satellite) link.
    pub multipath_rate: f64,
    /// Burst bias drawn uniformly from this range (m).
    pub multipath_min: f64,
    pub multipath_max: f64,
    /// Mean burst length, epochs.
    pub multipath_mean_duration: f64,
    /// Receiver clock bias random walk (m per sqrt s).
    pub clock_bias_walk: f64,
    /// Receiver clock drift random walk (m/s per sqrt s).
    pub clock_drift_walk: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pseudorange_sigma_base: 1.0,
            differential_sigma: 0.2,
            doppler_sigma: 0.1,
            uwb_sigma: 0.3,
            multipath_rate: 0.0,
            multipath_min: 5.0,
            multipath_max: 15.0,
            multipath_mean_duration: 10.0,
            clock_bias_walk: 0.1,
            clock_drift_walk: 0.01,
        }
    }
}

impl NoiseConfig {
    /// All random error sources off.
    pub fn silent() -> Self {
        Self {
            pseudorange_sigma_base: 0.0,
            differential_sigma: 0.0,
            doppler_sigma: 0.0,
            uwb_sigma: 0.0,
            multipath_rate: 0.0,
            clock_bias_walk: 0.0,
            clock_drift_walk: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Constant term of the elevation weighting model (m).
    pub pseudorange_sigma_a: f64,
    /// Elevation-dependent term of the weighting model (m).
    pub pseudorange_sigma_b: f64,
    pub window_len: usize,
    /// Vehicle whose errors make the headline metrics.
    pub target_vehicle: usize,
    pub gate: GateConfig,
    pub solver: SolverConfig,
    pub plane: PlaneConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pseudorange_sigma_a: 0.5,
            pseudorange_sigma_b: 0.5,
            window_len: DEFAULT_WINDOW_LEN,
            target_vehicle: 0,
            gate: GateConfig::default(),
            solver: SolverConfig::default(),
            plane: PlaneConfig::default(),
        }
    }
}

impl EstimatorConfig {
    /// Weighting sigma of a pseudorange seen at `elevation` radians.
    pub fn pseudorange_sigma(&self, elevation: f64) -> f64 {
        let s = elevation.sin().max(1e-3);
        (self.pseudorange_sigma_a.powi(2) + (self.pseudorange_sigma_b / s).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub modes: Vec<MethodMode>,
    /// Runs per (rate, mode), using seeds `seed`, `seed + 1`, ...
    pub seeds: usize,
}

impl ScenarioConfig {
    /// A small valid scenario with default sections.
    pub fn new(seed: u64, n_vehicles: usize, duration: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            n_vehicles,
            duration,
            epoch_interval: default_epoch_interval(),
            interruption_rate: 0.0,
            mode: None,
            origin: OriginConfig::default(),
            road: RoadConfig::default(),
            vehicles: VehicleConfig::default(),
            constellation: ConstellationConfig::default(),
            noise: NoiseConfig::default(),
            estimator: EstimatorConfig::default(),
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
            });
        }
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.n_vehicles == 0 {
            return invalid("n_vehicles must be at least 1".into());
        }
        if self.duration == 0 {
            return invalid("duration must be at least 1 epoch".into());
        }
        if !(self.epoch_interval > 0.0 && self.epoch_interval.is_finite()) {
            return invalid(format!("epoch_interval must be positive, got {}", self.epoch_interval));
        }
        if !(0.0..=1.0).contains(&self.interruption_rate) {
            return invalid(format!("interruption_rate must lie in [0, 1], got {}", self.interruption_rate));
        }
        let o = &self.origin;
        if !(o.latitude_deg.abs() <= 90.0 && o.longitude_deg.abs() <= 180.0 && o.height.is_finite()) {
            return invalid("origin latitude, longitude or height out of range".into());
        }
        match self.road.shape() {
            RoadShape::Plane => {}
            RoadShape::Slope { grade } if grade.is_finite() && grade.abs() < 1.0 => {}
            RoadShape::Curved { radius } if radius > 0.0 && radius.is_finite() => {}
            shape => return invalid(format!("road shape {shape:?} has an out-of-range parameter")),
        }
        let v = &self.vehicles;
        for (name, list) in [
            ("lane_offsets", &v.lane_offsets),
            ("speeds", &v.speeds),
            ("antenna_heights", &v.antenna_heights),
        ] {
            if list.is_empty() || list.iter().any(|x| !x.is_finite()) {
                return invalid(format!("vehicles.{name} must be a non-empty list of finite numbers"));
            }
        }
        if v.antenna_heights.iter().any(|h| *h < 0.0) || !(v.spacing.is_finite()) {
            return invalid("antenna heights must be non-negative and spacing finite".into());
        }
        let c = &self.constellation;
        if c.planes * c.per_plane < 4 || c.orbit_radius < 2.0e7 || c.orbit_radius > 4.5e7 {
            return invalid("constellation needs at least 4 satellites at MEO radius".into());
        }
        for ev in &c.canyons {
            if ev.end_epoch < ev.start_epoch || ev.vehicles.iter().any(|&i| i >= self.n_vehicles) {
                return invalid(format!("canyon event {ev:?} is inconsistent"));
            }
        }
        let n = &self.noise;
        let sigmas = [
            n.pseudorange_sigma_base,
            n.differential_sigma,
            n.doppler_sigma,
            n.uwb_sigma,
            n.clock_bias_walk,
            n.clock_drift_walk,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return invalid("noise sigmas must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&n.multipath_rate)
            || n.multipath_min > n.multipath_max
            || n.multipath_mean_duration < 1.0
        {
            return invalid("multipath rate must lie in [0, 1], min <= max and mean duration >= 1".into());
        }
        let e = &self.estimator;
        if !(e.pseudorange_sigma_a >= 0.0 && e.pseudorange_sigma_b >= 0.0)
            || e.pseudorange_sigma_a + e.pseudorange_sigma_b <= 0.0
        {
            return invalid("estimator pseudorange sigmas must be non-negative and not both zero".into());
        }
        if e.window_len == 0 || e.target_vehicle >= self.n_vehicles {
            return invalid("estimator window_len must be positive and target_vehicle an existing vehicle".into());
        }
        e.plane.validate().map_err(|m| ConfigError::Invalid(format!("estimator.plane: {m}")))?;
        if let Some(s) = &self.sweep {
            if s.rates.is_empty() || s.modes.is_empty() || s.seeds == 0 {
                return invalid("sweep needs at least one rate, one mode and one seed".into());
            }
            if let Some(r) = s.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return invalid(format!("sweep rate {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}
