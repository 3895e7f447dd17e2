//! Road plane construction from shared position histories.
//!
//! The pipeline for one vehicle and epoch is: pick the fitting points near the
//! vehicle's SPP anchor, fit a plane by SVD, gate it on residuals and point
//! count, and if the gate fails run RANSAC fault exclusion and try once more.
//! A plane that passes is lifted by the antenna height so it constrains the
//! antenna position rather than the road surface.

mod fit;
mod history;
mod ransac;

pub use fit::{detect_availability, fit_plane_svd, point_plane_distance, translate_plane};
pub use history::PositionHistory;
pub use ransac::ransac_exclude;

use nalgebra::Vector3;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::EcefVector;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("fitting points do not span a plane (singular value ratio {0:.3})")]
    DegenerateGeometry(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneConfig {
    /// Radius around the anchor for selecting fitting points (m).
    pub range_fitting: f64,
    pub max_fit_points: usize,
    pub min_fit_points: usize,
    /// Residual threshold for availability and for RANSAC inliers (m).
    pub residual_threshold: f64,
    pub ransac_max_iterations: usize,
    /// Per-vehicle ring buffer length, epochs.
    pub history_capacity: usize,
    /// Minimum ratio of the two smallest singular values of the centered
    /// fitting matrix; below it the normal is not determined.
    pub min_planarity_ratio: f64,
    /// Lower bound on the plane-constraint noise (m).
    pub sigma_pc_floor: f64,
    /// Whether a vehicle's own past positions join its fitting set.
    pub include_own_history: bool,
    /// RANSAC fault exclusion after a failed availability check.
    pub fault_exclusion: bool,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        Self {
            range_fitting: 50.0,
            max_fit_points: 20,
            min_fit_points: 15,
            residual_threshold: 5.0,
            ransac_max_iterations: 7,
            history_capacity: 300,
            min_planarity_ratio: 10.0,
            sigma_pc_floor: 0.1,
            include_own_history: true,
            fault_exclusion: true,
        }
    }
}

impl PlaneConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_fit_points > self.max_fit_points {
            return Err(format!(
                "min_fit_points ({}) exceeds max_fit_points ({})",
                self.min_fit_points, self.max_fit_points
            ));
        }
        let positive = [
            ("range_fitting", self.range_fitting),
            ("residual_threshold", self.residual_threshold),
            ("min_planarity_ratio", self.min_planarity_ratio),
            ("sigma_pc_floor", self.sigma_pc_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_fit_points < 3 || self.ransac_max_iterations == 0 || self.history_capacity == 0 {
            return Err("max_fit_points >= 3, ransac_max_iterations > 0 and history_capacity > 0 required".into());
        }
        Ok(())
    }
}

/// One fed-back positioning result, already projected to the road surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub vehicle_id: usize,
    pub epoch: u64,
    pub road_point: EcefVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitPointSet {
    /// SPP position of the target vehicle at the current epoch.
    pub anchor: EcefVector,
    pub points: Vec<EcefVector>,
    pub target_vehicle: usize,
    pub epoch: u64,
}

impl FitPointSet {
    pub fn new(anchor: EcefVector, points: Vec<EcefVector>) -> Self {
        Self {
            anchor,
            points,
            target_vehicle: 0,
            epoch: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn with_points(&self, points: Vec<EcefVector>) -> Self {
        Self {
            anchor: self.anchor,
            points,
            target_vehicle: self.target_vehicle,
            epoch: self.epoch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneStatus {
    Available,
    AvailableAfterExclusion,
    Unavailable,
}

impl PlaneStatus {
    pub fn is_usable(self) -> bool {
        !matches!(self, PlaneStatus::Unavailable)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneStatus::Available => "available",
            PlaneStatus::AvailableAfterExclusion => "available_after_exclusion",
            PlaneStatus::Unavailable => "unavailable",
        }
    }
}

/// Plane `a x + b y + c z + d = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Offset of the fitted road-surface plane (m).
    pub d: f64,
    /// Offset after lifting the plane to antenna height (m).
    pub translated_d: f64,
    pub status: PlaneStatus,
    /// Noise of the plane-constraint factor (m).
    pub sigma_pc: f64,
}

impl Plane {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residuals: Vec<f64>,
    pub res_max: f64,
    pub n_points: usize,
    /// Points removed by fault exclusion.
    pub excluded: usize,
}

impl FitDiagnostics {
    pub fn rms(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Result of [`build_plane`]. `plane` holds the last successful fit, whatever
/// its status; use [`PlaneBuild::usable`] to get a plane fit for constraining.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBuild {
    pub status: PlaneStatus,
    pub plane: Option<Plane>,
    pub diagnostics: Option<FitDiagnostics>,
    /// Points within range before down-selection.
    pub candidates: usize,
}

impl PlaneBuild {
    pub fn usable(&self) -> Option<&Plane> {
        self.plane.as_ref().filter(|p| p.status.is_usable())
    }

    fn unavailable(candidates: usize) -> Self {
        Self {
            status: PlaneStatus::Unavailable,
            plane: None,
            diagnostics: None,
            candidates,
        }
    }
}

/// Selects history points within `range_fitting` of the anchor, randomly
/// thinning to `max_fit_points` when more qualify.
pub fn collect_fit_points(
    history: &[PositionRecord],
    anchor: EcefVector,
    target_vehicle: usize,
    epoch: u64,
    cfg: &PlaneConfig,
    rng_seed: u64,
) -> FitPointSet {
    let mut points: Vec<EcefVector> = history
        .iter()
        .filter(|r| cfg.include_own_history || r.vehicle_id != target_vehicle)
        .filter(|r| (r.road_point - anchor).norm() < cfg.range_fitting)
        .map(|r| r.road_point)
        .collect();
    if points.len() > cfg.max_fit_points {
        let mut rng = rng::substream(rng_seed, &[0x5e1ec7]);
        let mut keep = index::sample(&mut rng, points.len(), cfg.max_fit_points).into_vec();
        keep.sort_unstable();
        points = keep.into_iter().map(|i| points[i]).collect();
    }
    FitPointSet {
        anchor,
        points,
        target_vehicle,
        epoch,
    }
}

fn finish(mut plane: Plane, diag: &FitDiagnostics, status: PlaneStatus, antenna_height: f64, cfg: &PlaneConfig) -> Plane {
    plane = translate_plane(&plane, antenna_height);
    plane.status = status;
    plane.sigma_pc = diag.rms().max(cfg.sigma_pc_floor);
    plane
}

/// Full plane construction for one vehicle at one epoch.
///
/// Never fails: every failure mode ends in [`PlaneStatus::Unavailable`].
pub fn build_plane(
    history: &[PositionRecord],
    anchor: EcefVector,
    antenna_height: f64,
    target_vehicle: usize,
    epoch: u64,
    cfg: &PlaneConfig,
    rng_seed: u64,
) -> PlaneBuild {
    let candidates = history
        .iter()
        .filter(|r| cfg.include_own_history || r.vehicle_id != target_vehicle)
        .filter(|r| (r.road_point - anchor).norm() < cfg.range_fitting)
        .count();
    let set = collect_fit_points(history, anchor, target_vehicle, epoch, cfg, rng_seed);
    if set.len() < 3 {
        return PlaneBuild::unavailable(candidates);
    }

    let first = fit_plane_svd(&set, cfg);
    let mut last_fit = None;
    match &first {
        Ok((plane, diag)) => {
            if detect_availability(diag, cfg) == PlaneStatus::Available {
                return PlaneBuild {
                    status: PlaneStatus::Available,
                    plane: Some(finish(*plane, diag, PlaneStatus::Available, antenna_height, cfg)),
                    diagnostics: Some(diag.clone()),
                    candidates,
                };
            }
            last_fit = Some((*plane, diag.clone()));
        }
        Err(PlaneError::TooFewPoints(_)) => return PlaneBuild::unavailable(candidates),
        Err(PlaneError::DegenerateGeometry(_)) => {}
    }

    if cfg.fault_exclusion {
        if let Ok(reduced) = ransac_exclude(&set, cfg, rng::derive_seed(rng_seed, &[0x4a5ac])) {
            let excluded = set.len() - reduced.len();
            if let Ok((plane, mut diag)) = fit_plane_svd(&reduced, cfg) {
                diag.excluded = excluded;
                let status = if detect_availability(&diag, cfg) == PlaneStatus::Available {
                    PlaneStatus::AvailableAfterExclusion
                } else {
                    PlaneStatus::Unavailable
                };
                return PlaneBuild {
                    status,
                    plane: Some(finish(plane, &diag, status, antenna_height, cfg)),
                    diagnostics: Some(diag),
                    candidates,
                };
            }
        }
    }

    match last_fit {
        Some((plane, diag)) => PlaneBuild {
            status: PlaneStatus::Unavailable,
            plane: Some(finish(plane, &diag, PlaneStatus::Unavailable, antenna_height, cfg)),
            diagnostics: Some(diag),
            candidates,
        },
        None => PlaneBuild::unavailable(candidates),
    }
}
