//! WGS-84 coordinate frames and the antenna-to-road projection.
//!
//! Positions are carried as plain ECEF vectors in meters. Geodetic latitude and
//! longitude are in radians, height is above the ellipsoid.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position in the Earth-Centered-Earth-Fixed frame, meters.
pub type EcefVector = Vector3<f64>;

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis (m).
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

const MIN_GEOCENTRIC_RADIUS: f64 = 1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("point is {0:.1} m from the geocenter; geodetic conversion is undefined this close")]
    NearCenter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    /// Radians, |lat| <= pi/2.
    pub latitude: f64,
    /// Radians, in (-pi, pi].
    pub longitude: f64,
    /// Meters above the ellipsoid.
    pub height: f64,
}

impl GeodeticPoint {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        Self {
            latitude,
            longitude,
            height,
        }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }
}

/// Rotation taking local East-North-Up coordinates into ECEF.
///
/// Columns are the East, North and Up unit vectors expressed in ECEF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuRotation(Matrix3<f64>);

impl EnuRotation {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn east(&self) -> Vector3<f64> {
        self.0.column(0).into_owned()
    }

    pub fn north(&self) -> Vector3<f64> {
        self.0.column(1).into_owned()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.0.column(2).into_owned()
    }

    /// ENU components -> ECEF direction.
    pub fn enu_to_ecef(&self, enu: &Vector3<f64>) -> Vector3<f64> {
        self.0 * enu
    }

    /// ECEF direction -> ENU components.
    pub fn ecef_to_enu(&self, ecef: &Vector3<f64>) -> Vector3<f64> {
        self.0.transpose() * ecef
    }
}

pub fn geodetic_to_ecef(g: &GeodeticPoint) -> EcefVector {
    let (sin_lat, cos_lat) = g.latitude.sin_cos();
    let (sin_lon, cos_lon) = g.longitude.sin_cos();
    // prime-vertical radius of curvature
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + g.height) * cos_lat * cos_lon,
        (n + g.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + g.height) * sin_lat,
    )
}

/// Iterative inversion of [`geodetic_to_ecef`], converged to 1e-12 rad.
pub fn ecef_to_geodetic(p: &EcefVector) -> Result<GeodeticPoint, GeodesyError> {
    let r = p.norm();
    if !(r > MIN_GEOCENTRIC_RADIUS) {
        return Err(GeodesyError::NearCenter(r));
    }
    let rho = p.x.hypot(p.y);
    let longitude = p.y.atan2(p.x);
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..20 {
        let height = ellipsoidal_height(lat, rho, p.z);
        let n = prime_vertical_radius(lat);
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + height)));
        let delta = (next - lat).abs();
        lat = next;
        if delta < 1e-12 {
            break;
        }
    }
    let height = ellipsoidal_height(lat, rho, p.z);
    Ok(GeodeticPoint {
        latitude: lat,
        longitude,
        height,
    })
}

fn prime_vertical_radius(lat: f64) -> f64 {
    let s = lat.sin();
    WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt()
}

/// Height for a given latitude, using whichever formula is well conditioned
/// there (the cosine form fails at the poles, the sine form at the equator).
fn ellipsoidal_height(lat: f64, rho: f64, z: f64) -> f64 {
    let (sin_lat, cos_lat) = lat.sin_cos();
    let n = prime_vertical_radius(lat);
    if cos_lat.abs() > sin_lat.abs() {
        rho / cos_lat - n
    } else {
        z / sin_lat - n * (1.0 - WGS84_E2)
    }
}

pub fn enu_rotation(reference: &GeodeticPoint) -> EnuRotation {
    let (sin_lat, cos_lat) = reference.latitude.sin_cos();
    let (sin_lon, cos_lon) = reference.longitude.sin_cos();
    #[rustfmt::skip]
    let m = Matrix3::new(
        -sin_lon, -sin_lat * cos_lon, cos_lat * cos_lon,
         cos_lon, -sin_lat * sin_lon, cos_lat * sin_lon,
         0.0,      cos_lat,           sin_lat,
    );
    EnuRotation(m)
}

/// Moves an antenna position `antenna_height` meters down along the local Up
/// direction at `reference`, giving the road-surface point under the antenna.
pub fn project_to_road(p: &EcefVector, antenna_height: f64, reference: &GeodeticPoint) -> EcefVector {
    let s = enu_rotation(reference);
    p - s.enu_to_ecef(&Vector3::new(0.0, 0.0, antenna_height))
}
