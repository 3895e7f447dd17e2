use std::f64::consts::TAU;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;

use super::stream;
use crate::config::ScenarioConfig;
use crate::factor_graph::SatelliteState;
use crate::geodesy::{ecef_to_geodetic, enu_rotation, EcefVector};
use crate::rng;

/// m^3/s^2
pub const EARTH_GM: f64 = 3.986_004_418e14;
/// rad/s
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_146_7e-5;

/// Satellite clock offset (m) and drift (m/s) at `time` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteClock {
    pub offset: f64,
    pub drift: f64,
}

struct Layout {
    raan0: f64,
    phase0: f64,
    gmst0: f64,
    clocks: Vec<(f64, f64)>,
}

fn layout(cfg: &ScenarioConfig) -> Layout {
    let c = &cfg.constellation;
    let mut r = rng::substream(cfg.seed, &[stream::CONSTELLATION]);
    let raan0 = r.random_range(0.0..TAU);
    let phase0 = r.random_range(0.0..TAU);
    let gmst0 = r.random_range(0.0..TAU);
    let clocks = (0..c.planes * c.per_plane)
        .map(|_| (r.random_range(-3000.0..3000.0), r.random_range(-0.1..0.1)))
        .collect();
    Layout {
        raan0,
        phase0,
        gmst0,
        clocks,
    }
}

/// Seconds since the constellation reference time at `epoch`.
pub fn epoch_time(cfg: &ScenarioConfig, epoch: u64) -> f64 {
    cfg.constellation.start_time + epoch as f64 * cfg.epoch_interval
}

fn satellite_clock(layout: &Layout, index: usize, t: f64) -> SatelliteClock {
    let (offset, drift) = layout.clocks[index];
    SatelliteClock {
        offset: offset + drift * t,
        drift,
    }
}

/// Clocks of all satellites at `epoch`; satellite `id` sits at index `id - 1`.
pub fn satellite_clocks(cfg: &ScenarioConfig, epoch: u64) -> Vec<SatelliteClock> {
    let lay = layout(cfg);
    let t = epoch_time(cfg, epoch);
    (0..lay.clocks.len()).map(|i| satellite_clock(&lay, i, t)).collect()
}

/// Every satellite of the Walker-style constellation at `epoch`, in ECEF.
///
/// Circular orbits spread over equally spaced planes with adjacent planes
/// phased by one slot fraction. `elevation` is left at zero; see
/// [`visible_satellites`].
pub fn generate_constellation(epoch: u64, cfg: &ScenarioConfig) -> Vec<SatelliteState> {
    let c = &cfg.constellation;
    let lay = layout(cfg);
    let t = epoch_time(cfg, epoch);
    let r = c.orbit_radius;
    let n = (EARTH_GM / r.powi(3)).sqrt();
    let incl = c.inclination_deg.to_radians();
    let earth = Rotation3::from_axis_angle(&Vector3::z_axis(), -(lay.gmst0 + EARTH_ROTATION_RATE * t));
    let omega = Vector3::new(0.0, 0.0, EARTH_ROTATION_RATE);
    let total = (c.planes * c.per_plane) as f64;

    let mut sats = Vec::with_capacity(c.planes * c.per_plane);
    for p in 0..c.planes {
        let raan = lay.raan0 + TAU * p as f64 / c.planes as f64;
        let orient = Rotation3::from_axis_angle(&Vector3::z_axis(), raan) * Rotation3::from_axis_angle(&Vector3::x_axis(), incl);
        for j in 0..c.per_plane {
            let index = p * c.per_plane + j;
            let u = lay.phase0 + TAU * j as f64 / c.per_plane as f64 + TAU * p as f64 / total + n * t;
            let p_eci = orient * Vector3::new(r * u.cos(), r * u.sin(), 0.0);
            let v_eci = orient * Vector3::new(-r * n * u.sin(), r * n * u.cos(), 0.0);
            let position = earth * p_eci;
            let velocity = earth * v_eci - omega.cross(&position);
            sats.push(SatelliteState {
                id: index as u32 + 1,
                position,
                velocity,
                clock_drift: satellite_clock(&lay, index, t).drift,
                elevation: 0.0,
            });
        }
    }
    sats
}

/// Elevation and azimuth (radians, azimuth clockwise from north) of `target` seen from `receiver`.
pub fn elevation_azimuth(receiver: &EcefVector, target: &EcefVector) -> (f64, f64) {
    let geo = ecef_to_geodetic(receiver).expect("receiver position is finite");
    let enu = enu_rotation(&geo).ecef_to_enu(&(target - receiver));
    let el = (enu.z / enu.norm()).asin();
    let az = enu.x.atan2(enu.y).rem_euclid(TAU);
    (el, az)
}

/// Satellites a vehicle at `receiver` can track at `epoch`, with elevations filled.
///
/// Applies the elevation mask and every active street canyon of the vehicle.
pub fn visible_satellites(
    sats: &[SatelliteState],
    receiver: &EcefVector,
    vehicle: usize,
    epoch: u64,
    cfg: &ScenarioConfig,
) -> Vec<SatelliteState> {
    let mask = cfg.constellation.elevation_mask_deg.to_radians();
    let street = cfg.road.heading_deg.to_radians();
    let canyons: Vec<_> = cfg
        .constellation
        .canyons
        .iter()
        .filter(|ev| ev.start_epoch <= epoch && epoch < ev.end_epoch)
        .filter(|ev| ev.vehicles.is_empty() || ev.vehicles.contains(&vehicle))
        .collect();
    sats.iter()
        .filter_map(|s| {
            let (el, az) = elevation_azimuth(receiver, &s.position);
            if el < mask {
                return None;
            }
            let blocked = canyons.iter().any(|ev| {
                let off_axis = (az - street).rem_euclid(std::f64::consts::PI);
                let off_axis = off_axis.min(std::f64::consts::PI - off_axis);
                el < ev.mask_deg.to_radians() && off_axis > ev.open_half_width_deg.to_radians()
            });
            (!blocked).then_some(SatelliteState { elevation: el, ..*s })
        })
        .collect()
}
