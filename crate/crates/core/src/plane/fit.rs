use nalgebra::{DMatrix, Vector3};

use super::{FitDiagnostics, FitPointSet, Plane, PlaneConfig, PlaneError, PlaneStatus};
use crate::geodesy::{ecef_to_geodetic, enu_rotation, EcefVector};

/// Direction the fitted normal must point along: local Up at the anchor for
/// Earth-surface points, +z for small local-frame coordinates.
fn orientation_reference(anchor: &EcefVector) -> Vector3<f64> {
    match ecef_to_geodetic(anchor) {
        Ok(g) => enu_rotation(&g).up(),
        Err(_) => Vector3::z(),
    }
}

fn centroid(points: &[EcefVector]) -> EcefVector {
    // accumulate offsets from the first point to keep ECEF magnitudes out of the sum
    let base = points[0];
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + (p - base)) / points.len() as f64;
    base + mean
}

/// Least-squares plane through the set: the normal is the right-singular vector
/// of the centered point matrix with the smallest singular value.
///
/// The returned plane has status `Unavailable` until [`detect_availability`]
/// has been applied, and `translated_d == d`.
pub fn fit_plane_svd(set: &FitPointSet, cfg: &PlaneConfig) -> Result<(Plane, FitDiagnostics), PlaneError> {
    let n = set.points.len();
    if n < 3 {
        return Err(PlaneError::TooFewPoints(n));
    }
    let center = centroid(&set.points);
    let a = DMatrix::from_fn(n, 3, |r, c| set.points[r][c] - center[c]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let (s1, s2, s3) = (sv[order[0]], sv[order[1]], sv[order[2]]);
    let ratio = if s3 > 0.0 { s2 / s3 } else if s2 > 0.0 { f64::INFINITY } else { 0.0 };
    if s2 <= 1e-9 * s1 || ratio < cfg.min_planarity_ratio {
        return Err(PlaneError::DegenerateGeometry(ratio));
    }

    let row = order[2];
    let mut normal = Vector3::new(v_t[(row, 0)], v_t[(row, 1)], v_t[(row, 2)]);
    normal.normalize_mut();
    if normal.dot(&orientation_reference(&set.anchor)) < 0.0 {
        normal = -normal;
    }
    let d = -normal.dot(&center);
    let residuals: Vec<f64> = set.points.iter().map(|p| normal.dot(&(p - center)).abs()).collect();
    let res_max = residuals.iter().copied().fold(0.0, f64::max);
    let plane = Plane {
        a: normal.x,
        b: normal.y,
        c: normal.z,
        d,
        translated_d: d,
        status: PlaneStatus::Unavailable,
        sigma_pc: cfg.sigma_pc_floor,
    };
    Ok((
        plane,
        FitDiagnostics {
            residuals,
            res_max,
            n_points: n,
            excluded: 0,
        },
    ))
}

/// Shifts the plane away from the geocenter by the antenna height, keeping the
/// normal: `d + h` for `d >= 0`, `d - h` otherwise.
pub fn translate_plane(plane: &Plane, antenna_height: f64) -> Plane {
    let translated_d = if plane.d >= 0.0 {
        plane.d + antenna_height
    } else {
        plane.d - antenna_height
    };
    Plane { translated_d, ..*plane }
}

/// Unsigned distance from `p` to the fitted (untranslated) plane.
pub fn point_plane_distance(p: &EcefVector, plane: &Plane) -> f64 {
    (plane.a * p.x + plane.b * p.y + plane.c * p.z + plane.d).abs()
}

/// Availability gate on the fit residuals and point count.
pub fn detect_availability(diag: &FitDiagnostics, cfg: &PlaneConfig) -> PlaneStatus {
    if diag.res_max <= cfg.residual_threshold && diag.n_points >= cfg.min_fit_points {
        PlaneStatus::Available
    } else {
        PlaneStatus::Unavailable
    }
}
