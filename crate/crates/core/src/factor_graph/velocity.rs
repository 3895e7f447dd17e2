use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{DopplerObs, FactorGraphError, SatelliteState, VelocityEstimate, VELOCITY_SIGMA};
use crate::geodesy::EcefVector;

const MAX_CONDITION: f64 = 1e12;

/// Least-squares receiver velocity and clock drift from Doppler shifts.
///
/// Line-of-sight unit vectors are taken from `spp_position`. Dopplers whose
/// satellite is missing from `sats`, or that repeat a satellite, are ignored.
pub fn estimate_velocity(
    dopplers: &[DopplerObs],
    sats: &[SatelliteState],
    spp_position: &EcefVector,
) -> Result<VelocityEstimate, FactorGraphError> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::with_capacity(dopplers.len());
    for obs in dopplers {
        if !seen.insert(obs.sat_id) {
            continue;
        }
        let Some(sat) = sats.iter().find(|s| s.id == obs.sat_id) else {
            continue;
        };
        let los = sat.position - spp_position;
        let range = los.norm();
        if !(range > 0.0) {
            return Err(FactorGraphError::DegenerateGeometry);
        }
        let e = los / range;
        let y = -obs.wavelength * obs.value - sat.velocity.dot(&e) + sat.clock_drift;
        rows.push((e, y));
    }
    if rows.len() < 4 {
        return Err(FactorGraphError::InsufficientSatellites(rows.len()));
    }

    let g = DMatrix::from_fn(rows.len(), 4, |r, c| if c < 3 { -rows[r].0[c] } else { 1.0 });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let gtg = g.transpose() * &g;
    let eig = gtg.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(FactorGraphError::SingularGeometry(cond));
    }
    let x = gtg
        .cholesky()
        .ok_or(FactorGraphError::SingularGeometry(cond))?
        .solve(&(g.transpose() * y));
    Ok(VelocityEstimate {
        velocity: Vector3::new(x[0], x[1], x[2]),
        clock_drift: x[3],
        sigma_v: VELOCITY_SIGMA,
    })
}
