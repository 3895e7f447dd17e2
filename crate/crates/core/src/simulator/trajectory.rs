use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream;
use crate::config::{RoadShape, ScenarioConfig};
use crate::factor_graph::NodeState;
use crate::geodesy::{ecef_to_geodetic, enu_rotation, geodetic_to_ecef, EcefVector, EnuRotation, WGS84_A, WGS84_E2};
use crate::rng;

/// True state of one vehicle at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    /// Antenna position and receiver clock bias (m).
    pub state: NodeState,
    /// Antenna velocity (m/s).
    pub velocity: EcefVector,
    /// Receiver clock drift (m/s).
    pub clock_drift: f64,
    /// Road-surface point below the antenna.
    pub road_point: EcefVector,
}

/// Truth for every vehicle and epoch, indexed `[vehicle][epoch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub states: Vec<Vec<TruthState>>,
    pub antenna_heights: Vec<f64>,
}

impl Trajectories {
    pub fn n_vehicles(&self) -> usize {
        self.states.len()
    }

    pub fn at(&self, vehicle: usize, epoch: u64) -> &TruthState {
        &self.states[vehicle][epoch as usize]
    }
}

/// Road geometry in the local frame of the scenario origin.
struct Road {
    origin: EcefVector,
    frame: EnuRotation,
    along: Vector3<f64>,
    right: Vector3<f64>,
    shape: RoadShape,
}

impl Road {
    fn new(cfg: &ScenarioConfig) -> Self {
        let g = cfg.origin.geodetic();
        let h = cfg.road.heading_deg.to_radians();
        Self {
            origin: geodetic_to_ecef(&g),
            frame: enu_rotation(&g),
            along: Vector3::new(h.sin(), h.cos(), 0.0),
            right: Vector3::new(h.cos(), -h.sin(), 0.0),
            shape: cfg.road.shape(),
        }
    }

    /// Height above the origin's tangent plane and its slope at along-track distance `s`.
    fn profile(&self, s: f64) -> (f64, f64) {
        match self.shape {
            RoadShape::Plane => (0.0, 0.0),
            RoadShape::Slope { grade } => (grade * s, grade),
            RoadShape::Curved { radius } => (-s * s / (2.0 * radius), -s / radius),
        }
    }

    /// Road point and its velocity for along-track position `s` moving at `speed`.
    fn point(&self, s: f64, lateral: f64, speed: f64) -> (EcefVector, Vector3<f64>) {
        let (u, du) = self.profile(s);
        let enu = self.along * s + self.right * lateral + Vector3::new(0.0, 0.0, u);
        let venu = (self.along + Vector3::new(0.0, 0.0, du)) * speed;
        (self.origin + self.frame.enu_to_ecef(&enu), self.frame.enu_to_ecef(&venu))
    }
}

/// Rate of change of the local Up vector for a point moving with `velocity`.
fn up_rate(frame: &EnuRotation, latitude: f64, height: f64, velocity: &Vector3<f64>) -> Vector3<f64> {
    let w = 1.0 - WGS84_E2 * latitude.sin().powi(2);
    let prime = WGS84_A / w.sqrt();
    let meridian = WGS84_A * (1.0 - WGS84_E2) / w.powf(1.5);
    let v = frame.ecef_to_enu(velocity);
    frame.north() * (v.y / (meridian + height)) + frame.east() * (v.x / (prime + height))
}

/// Lane-following truth for every vehicle over the scenario duration.
///
/// Vehicle `m` starts `m * spacing` behind the origin on its lane and holds its
/// speed. The antenna sits `antenna_height` above the road point along the local
/// vertical. Receiver clocks follow a bias/drift random walk.
pub fn generate_trajectories(cfg: &ScenarioConfig) -> Trajectories {
    let road = Road::new(cfg);
    let dt = cfg.epoch_interval;
    let mut states = Vec::with_capacity(cfg.n_vehicles);
    let mut heights = Vec::with_capacity(cfg.n_vehicles);
    for m in 0..cfg.n_vehicles {
        let veh = &cfg.vehicles;
        let (lane, speed, h) = (veh.lane_offset(m), veh.speed(m), veh.antenna_height(m));
        heights.push(h);

        let mut clock_rng = rng::substream(cfg.seed, &[stream::CLOCK, m as u64]);
        let mut bias = clock_rng.random_range(-300.0..300.0);
        let mut drift = clock_rng.random_range(-2.0..2.0);
        let bias_walk = Normal::new(0.0, cfg.noise.clock_bias_walk * dt.sqrt()).expect("finite sigma");
        let drift_walk = Normal::new(0.0, cfg.noise.clock_drift_walk * dt.sqrt()).expect("finite sigma");

        let mut track = Vec::with_capacity(cfg.duration);
        for k in 0..cfg.duration {
            let s = -(m as f64) * veh.spacing + speed * dt * k as f64;
            let (road_point, road_velocity) = road.point(s, lane, speed);
            let geo = ecef_to_geodetic(&road_point).expect("road point is finite");
            let frame = enu_rotation(&geo);
            let position = road_point + frame.up() * h;
            let velocity = road_velocity + up_rate(&frame, geo.latitude, geo.height, &road_velocity) * h;
            track.push(TruthState {
                state: NodeState::new(position, bias),
                velocity,
                clock_drift: drift,
                road_point,
            });
            bias += drift * dt + bias_walk.sample(&mut clock_rng);
            drift += drift_walk.sample(&mut clock_rng);
        }
        states.push(track);
    }
    Trajectories {
        states,
        antenna_heights: heights,
    }
}
