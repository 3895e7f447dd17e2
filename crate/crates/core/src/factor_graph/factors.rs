use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3x4, Vector3};

use super::{
    FactorGraphError, NodeState, PseudorangeObs, RangeObs, SatelliteState, StateKey, VelocityEstimate,
};
use crate::plane::Plane;

/// `rho - drho - (|p - p_s| + b)`
pub fn pseudorange_error(state: &NodeState, sat: &SatelliteState, obs: &PseudorangeObs) -> f64 {
    obs.value - obs.dgnss_correction - ((state.position - sat.position).norm() + state.clock_bias)
}

/// Signed distance of the antenna from the translated plane.
pub fn plane_constraint_error(state: &NodeState, plane: &Plane) -> Result<f64, FactorGraphError> {
    if !plane.status.is_usable() {
        return Err(FactorGraphError::PlaneUnavailable);
    }
    let p = &state.position;
    Ok(plane.a * p.x + plane.b * p.y + plane.c * p.z + plane.translated_d)
}

pub fn range_error(a: &NodeState, b: &NodeState, obs: &RangeObs) -> f64 {
    obs.value - (a.position - b.position).norm()
}

pub fn velocity_error(curr: &NodeState, prev: &NodeState, vel: &VelocityEstimate, dt: f64) -> Vector3<f64> {
    vel.velocity - (curr.position - prev.position) / dt
}

/// One weighted measurement term of the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Pseudorange {
        key: StateKey,
        sat: SatelliteState,
        obs: PseudorangeObs,
    },
    Plane {
        key: StateKey,
        plane: Plane,
    },
    Range {
        a: StateKey,
        b: StateKey,
        obs: RangeObs,
    },
    Velocity {
        prev: StateKey,
        curr: StateKey,
        velocity: VelocityEstimate,
        dt: f64,
    },
}

/// Error and per-state Jacobian blocks of a factor at a linearization point.
///
/// Only the first `dim` rows of `error` and of each block are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub dim: usize,
    pub error: Vector3<f64>,
    /// d(error)/d[x, y, z, clock] for each involved state.
    pub blocks: Vec<(StateKey, Matrix3x4<f64>)>,
}

impl Factor {
    pub fn keys(&self) -> Vec<StateKey> {
        match self {
            Factor::Pseudorange { key, .. } | Factor::Plane { key, .. } => vec![*key],
            Factor::Range { a, b, .. } => vec![*a, *b],
            Factor::Velocity { prev, curr, .. } => vec![*prev, *curr],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Velocity { .. } => 3,
            _ => 1,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Factor::Pseudorange { obs, .. } => obs.sigma,
            Factor::Plane { plane, .. } => plane.sigma_pc,
            Factor::Range { obs, .. } => obs.sigma,
            Factor::Velocity { velocity, .. } => velocity.sigma_v,
        }
    }

    pub fn references(&self, key: &StateKey) -> bool {
        self.keys().contains(key)
    }

    /// Unweighted error; the first `dim()` components are meaningful.
    pub fn error(&self, states: &BTreeMap<StateKey, NodeState>) -> Result<Vector3<f64>, FactorGraphError> {
        let get = |k: &StateKey| states.get(k).ok_or(FactorGraphError::MissingState(*k));
        Ok(match self {
            Factor::Pseudorange { key, sat, obs } => Vector3::new(pseudorange_error(get(key)?, sat, obs), 0.0, 0.0),
            Factor::Plane { key, plane } => Vector3::new(plane_constraint_error(get(key)?, plane)?, 0.0, 0.0),
            Factor::Range { a, b, obs } => Vector3::new(range_error(get(a)?, get(b)?, obs), 0.0, 0.0),
            Factor::Velocity {
                prev,
                curr,
                velocity,
                dt,
            } => velocity_error(get(curr)?, get(prev)?, velocity, *dt),
        })
    }

    /// `error(new) - error(old)`, formed from coordinate differences so it
    /// stays accurate when both errors carry ECEF-scale rounding.
    /// Change in [`Factor::error`] when each state moves by the matching entry
    /// of `offsets`; states without an entry stay put.
    ///
    /// Evaluated from the offsets directly, so it keeps full precision when the
    /// offsets are far smaller than the ECEF coordinates.
    pub fn error_change(
        &self,
        states: &BTreeMap<StateKey, NodeState>,
        offsets: &BTreeMap<StateKey, NodeState>,
    ) -> Result<Vector3<f64>, FactorGraphError> {
        let get = |k: &StateKey| states.get(k).copied().ok_or(FactorGraphError::MissingState(*k));
        let off = |k: &StateKey| offsets.get(k).copied().unwrap_or(NodeState::new(Vector3::zeros(), 0.0));
        Ok(match self {
            Factor::Pseudorange { key, sat, .. } => {
                let d = off(key);
                let d_norm = norm_change(&(get(key)?.position - sat.position), &d.position);
                Vector3::new(-(d_norm + d.clock_bias), 0.0, 0.0)
            }
            Factor::Plane { key, plane } => {
                get(key)?;
                Vector3::new(plane.normal().dot(&off(key).position), 0.0, 0.0)
            }
            Factor::Range { a, b, .. } => {
                let base = get(a)?.position - get(b)?.position;
                let d_base = off(a).position - off(b).position;
                Vector3::new(-norm_change(&base, &d_base), 0.0, 0.0)
            }
            Factor::Velocity { prev, curr, dt, .. } => {
                get(prev)?;
                get(curr)?;
                -(off(curr).position - off(prev).position) / *dt
            }
        })
    }

    pub fn linearize(&self, states: &BTreeMap<StateKey, NodeState>) -> Result<Linearization, FactorGraphError> {
        Ok(Linearization {
            dim: self.dim(),
            error: self.error(states)?,
            blocks: factor_jacobian(self, states)?,
        })
    }
}

/// `|v + dv| - |v|` without cancellation.
fn norm_change(v: &Vector3<f64>, dv: &Vector3<f64>) -> f64 {
    let w = v + dv;
    let denom = v.norm() + w.norm();
    if denom == 0.0 {
        return 0.0;
    }
    dv.dot(&(v * 2.0 + dv)) / denom
}

fn unit(v: Vector3<f64>) -> Result<Vector3<f64>, FactorGraphError> {
    let n = v.norm();
    if !(n > 1e-9) {
        return Err(FactorGraphError::DegenerateGeometry);
    }
    Ok(v / n)
}

fn row(v: Vector3<f64>, clock: f64) -> Matrix3x4<f64> {
    let mut m = Matrix3x4::zeros();
    m.fixed_view_mut::<1, 3>(0, 0).copy_from(&v.transpose());
    m[(0, 3)] = clock;
    m
}

/// Analytic Jacobian of the factor error with respect to each involved state.
///
/// Rows are derivatives of the error (measurement minus model), so the
/// pseudorange row is `[e, -1]` with `e` the receiver-to-satellite unit vector.
pub fn factor_jacobian(
    factor: &Factor,
    states: &BTreeMap<StateKey, NodeState>,
) -> Result<Vec<(StateKey, Matrix3x4<f64>)>, FactorGraphError> {
    let get = |k: &StateKey| states.get(k).ok_or(FactorGraphError::MissingState(*k));
    Ok(match factor {
        Factor::Pseudorange { key, sat, .. } => {
            let e = unit(sat.position - get(key)?.position)?;
            vec![(*key, row(e, -1.0))]
        }
        Factor::Plane { key, plane } => {
            if !plane.status.is_usable() {
                return Err(FactorGraphError::PlaneUnavailable);
            }
            vec![(*key, row(plane.normal(), 0.0))]
        }
        Factor::Range { a, b, .. } => {
            let u = unit(get(a)?.position - get(b)?.position)?;
            vec![(*a, row(-u, 0.0)), (*b, row(u, 0.0))]
        }
        Factor::Velocity { prev, curr, dt, .. } => {
            let mut d_prev = Matrix3x4::zeros();
            d_prev.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() / *dt));
            vec![(*prev, d_prev), (*curr, -d_prev)]
        }
    })
}
